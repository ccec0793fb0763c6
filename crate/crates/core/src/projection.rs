//! Projected matrices and single-cycle phi approximations with residuals:
//! the orthogonal (Arnoldi), oblique (harmonic) and shift-and-invert
//! variants all evaluate every requested order from one decomposition.

use crate::arnoldi::{residual_direction, ArnoldiDecomp};
use crate::dense::{lu_solve, lu_solve_vec, phi_col, vec_norm2, DenseMatrix, LuFactors};
use crate::error::{Error, Result};
use crate::sparse::LinearOp;

/// T = H + gamma h^2 (I + gamma H)^{-H} e_k e_k^H. Only the last column of H
/// changes, so T stays upper Hessenberg. Its eigenpairs are the harmonic
/// Ritz pairs of the decomposition.
pub fn build_tk(h: &DenseMatrix, h_sub: f64, gamma: f64) -> Result<DenseMatrix> {
    assert!(h.is_square());
    let k = h.rows();
    let mut t = h.clone();
    if h_sub == 0.0 || gamma == 0.0 {
        return Ok(t);
    }
    let mut shifted_t = DenseMatrix::from_fn(k, k, |i, j| gamma * h[(j, i)]);
    for i in 0..k {
        shifted_t[(i, i)] += 1.0;
    }
    let mut ek = vec![0.0; k];
    ek[k - 1] = 1.0;
    let g = lu_solve_vec(&shifted_t, &ek).map_err(|_| Error::SingularShift(gamma))?;
    for i in 0..k {
        t[(i, k - 1)] += gamma * h_sub * h_sub * g[i];
    }
    Ok(t)
}

/// Xi = (I + gamma H)^{-H} (Ibar + gamma Hbar)^H, sized k x (k+1). The
/// product Xi * Hbar is the projected matrix governing harmonic corrections;
/// on a fresh Hessenberg cycle it coincides with `build_tk`.
pub fn xi_matrix(hbar: &DenseMatrix, gamma: f64) -> Result<DenseMatrix> {
    let k = hbar.cols();
    // M = (Ibar + gamma Hbar), (k+1) x k.
    let mut m = DenseMatrix::from_fn(k + 1, k, |i, j| gamma * hbar[(i, j)]);
    for i in 0..k {
        m[(i, i)] += 1.0;
    }
    // (I + gamma H)^T X = M^T  =>  X = Xi.
    let mut shifted_t = DenseMatrix::from_fn(k, k, |i, j| gamma * hbar[(j, i)]);
    for i in 0..k {
        shifted_t[(i, i)] += 1.0;
    }
    let lu = LuFactors::factor(&shifted_t).map_err(|_| Error::SingularShift(gamma))?;
    let mut xi = DenseMatrix::zeros(k, k + 1);
    for col in 0..k + 1 {
        // column `col` of M^T is row `col` of M
        let rhs: Vec<f64> = (0..k).map(|j| m[(col, j)]).collect();
        let x = lu.solve_vec(&rhs);
        for i in 0..k {
            xi[(i, col)] = x[i];
        }
    }
    Ok(xi)
}

/// Per-order output of a single-cycle approximation.
#[derive(Debug, Clone)]
pub struct PhiApprox {
    pub ell: usize,
    /// Coefficients of the approximation in the (leading) basis columns.
    pub coeffs: Vec<f64>,
    /// Scalar residual factor e_k^H phi_ell(-t M) beta e_1.
    pub residual_scalar: f64,
    /// Residual 2-norm.
    pub residual_norm: f64,
}

/// Arnoldi approximation y_l = V_k phi_l(-t H_k) beta e_1 with residual norm
/// |h_{k+1,k} e_k^H phi_l(-t H_k) beta e_1| for every requested order.
pub fn arnoldi_phi_approx(d: &ArnoldiDecomp, t: f64, ells: &[usize]) -> Result<Vec<PhiApprox>> {
    let k = d.k();
    let h = d.h_square();
    let smax = ells.iter().copied().max().unwrap_or(0);
    let mut e1 = vec![0.0; k];
    e1[0] = d.beta;
    let us = phi_col(&h.scaled(-t), &e1, smax)?;
    let h_sub = d.h_sub();
    Ok(ells
        .iter()
        .map(|&ell| {
            let u = &us[ell];
            let scalar = u[k - 1];
            PhiApprox {
                ell,
                coeffs: u.clone(),
                residual_scalar: scalar,
                residual_norm: (h_sub * scalar).abs(),
            }
        })
        .collect())
}

/// Harmonic approximation y_l = V_k phi_l(-t T_k) beta e_1; the residual is
/// V_{k+1} w * [e_k^H phi_l(-t T_k) beta e_1] with w the residual direction,
/// so its norm is ||w|| |e_k^H phi_l(-t T_k) beta e_1|.
pub fn harmonic_phi_approx(
    d: &ArnoldiDecomp,
    tk: &DenseMatrix,
    w_dir: &[f64],
    t: f64,
    ells: &[usize],
) -> Result<Vec<PhiApprox>> {
    let k = d.k();
    assert_eq!(tk.rows(), k);
    let smax = ells.iter().copied().max().unwrap_or(0);
    let mut e1 = vec![0.0; k];
    e1[0] = d.beta;
    let us = phi_col(&tk.scaled(-t), &e1, smax)?;
    let wnorm = vec_norm2(w_dir);
    Ok(ells
        .iter()
        .map(|&ell| {
            let u = &us[ell];
            let scalar = u[k - 1];
            PhiApprox {
                ell,
                coeffs: u.clone(),
                residual_scalar: scalar,
                residual_norm: wnorm * scalar.abs(),
            }
        })
        .collect())
}

/// Shift-and-invert approximation from a decomposition of (I + gamma A)^{-1}:
/// B = (H~^{-1} - I) / gamma, y_l = V~_k phi_l(-t B) beta e_1, residual norm
/// |h~_{k+1,k}/gamma * e_k^H H~^{-1} phi_l(-t B) beta e_1| * ||(I+gamma A) v~_{k+1}||.
/// The trailing norm factor costs one extra operator application.
pub fn si_phi_approx(
    d: &ArnoldiDecomp,
    gamma: f64,
    t: f64,
    ells: &[usize],
    a_op: &dyn LinearOp,
) -> Result<Vec<PhiApprox>> {
    let k = d.k();
    let h = d.h_square();
    let smax = ells.iter().copied().max().unwrap_or(0);

    let hinv = match lu_solve(&h, &DenseMatrix::identity(k)) {
        Ok(x) => x,
        Err(_) => return Err(Error::SingularProjected),
    };
    let mut b = hinv.clone();
    for i in 0..k {
        b[(i, i)] -= 1.0;
    }
    b.scale(1.0 / gamma);

    let mut e1 = vec![0.0; k];
    e1[0] = d.beta;
    let us = phi_col(&b.scaled(-t), &e1, smax)?;

    let h_sub = d.h_sub();
    // ||(I + gamma A) v_{k+1}||; skipped when breakdown zeroed the coupling.
    let norm_factor = if h_sub == 0.0 {
        0.0
    } else {
        let vk1 = &d.basis[k];
        let mut av = vec![0.0; vk1.len()];
        a_op.apply(vk1, &mut av);
        let shifted: Vec<f64> = vk1.iter().zip(&av).map(|(v, a)| v + gamma * a).collect();
        vec_norm2(&shifted)
    };

    Ok(ells
        .iter()
        .map(|&ell| {
            let u = &us[ell];
            // e_k^H H~^{-1} u = (row k of H~^{-1}) . u
            let mut scalar = 0.0;
            for j in 0..k {
                scalar += hinv[(k - 1, j)] * u[j];
            }
            PhiApprox {
                ell,
                coeffs: u.clone(),
                residual_scalar: scalar,
                residual_norm: (h_sub / gamma * scalar).abs() * norm_factor,
            }
        })
        .collect())
}

/// Residual direction for a fresh Hessenberg cycle: the harmonic closed form
/// for gamma > 0, or [0; -h] for the plain Arnoldi method.
pub fn cycle_residual_direction(d: &ArnoldiDecomp, gamma: f64) -> Result<Vec<f64>> {
    residual_direction(&d.hbar, gamma)
}
