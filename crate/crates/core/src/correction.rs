//! Correction ODEs across restart cycles.
//!
//! Each restart updates the accumulated approximation by a small projected
//! initial-value problem
//!     z' = -[Xi Hbar + (l/t) I] z + Xi c(t),    z(0) = 0,
//! whose forcing c(t) is the previous cycle's residual expressed in the new
//! basis. The forcing of cycle j needs the residual scalar of cycle j-1 at
//! every intermediate time, so all cycles are co-integrated as one stacked
//! block lower-triangular linear system; block 1 carries
//! u(tau) = phi_l(-tau T^{(1)}) beta e_1 through its governing ODE.
//!
//! The integrator is the classical five-stage SDIRK of order 4 with an
//! embedded order-3 error estimate (diagonal coefficient 1/4, stiffly
//! accurate, L-stable), run at absolute and relative tolerances 1e-9. The
//! system is linear, so each stage is a single linear solve done
//! block-forward through the coupling chain: one small LU per block and
//! stage. All stage abscissae are positive, so the right-hand side is never
//! evaluated at tau = 0 even when integration starts there.

use crate::dense::{axpy, dot, phi_taylor, vec_norm2, DenseMatrix, LuFactors};
use crate::error::{Error, Result};

const ODE_ATOL: f64 = 1e-9;
const ODE_RTOL: f64 = 1e-9;

/// SDIRK4(3), diagonal 1/4 (Hairer-Wanner). Rows of the stage matrix, the
/// stage abscissae, and the error-estimate weights b - b_hat.
const SD_GAMMA: f64 = 0.25;
const SD_A: [[f64; 5]; 5] = [
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [0.5, 0.25, 0.0, 0.0, 0.0],
    [17.0 / 50.0, -1.0 / 25.0, 0.25, 0.0, 0.0],
    [371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25, 0.0],
    [25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25],
];
const SD_C: [f64; 5] = [0.25, 0.75, 11.0 / 20.0, 0.5, 1.0];
const SD_ERR: [f64; 5] = [-3.0 / 16.0, -27.0 / 32.0, 25.0 / 32.0, 0.0, 0.25];

/// One restart cycle's contribution to the stack (cycles >= 2).
#[derive(Debug, Clone)]
pub struct CycleBlock {
    /// Xi = (I + gamma H)^{-H} (Ibar + gamma Hbar)^H, k x (k+1).
    pub xi: DenseMatrix,
    /// The cycle's (k+1) x k projection frame.
    pub hbar: DenseMatrix,
    /// Coordinates of the previous residual direction in this cycle's basis
    /// (length k+1, nonzero only in the leading q+1 entries).
    pub c_hat: Vec<f64>,
    /// Unit null direction of (Ibar + gamma Hbar)^H; brackets are colinear
    /// with it and project onto it to give the scalar residual coefficient.
    pub n_dir: Vec<f64>,
}

/// The stacked correction system for one phi order.
#[derive(Debug, Clone)]
pub struct CorrectionSystem {
    /// Projected matrix of the first cycle (T_k for the harmonic method,
    /// H_k for the orthogonal-projection variant).
    pub first_matrix: DenseMatrix,
    /// Norm of the original starting vector.
    pub beta: f64,
    /// Correction blocks for cycles 2..=J, oldest first.
    pub blocks: Vec<CycleBlock>,
    pub ell: usize,
    pub t_end: f64,
}

/// State of the stacked system at t_end.
#[derive(Debug, Clone)]
pub struct CorrectionSolution {
    /// First-cycle block u(t_end) = phi_l(-t T^{(1)}) beta e_1.
    pub u_first: Vec<f64>,
    /// z_j(t_end) for each correction block, oldest first.
    pub z_blocks: Vec<Vec<f64>>,
    /// z'(t_end) of the newest block (empty when there are no blocks).
    pub z_prime_last: Vec<f64>,
    /// Residual bracket of the newest block:
    /// c(t) - (Hbar + (l/t) Ibar) z - [z'; 0].
    pub bracket_last: Vec<f64>,
    /// 2-norm of the bracket: the cycle's residual norm.
    pub residual_norm_last: f64,
    /// Signed scalar residual coefficient n^T bracket of the newest block.
    pub rho_last: f64,
    /// Accumulated local error estimate of the integration.
    pub est_error: f64,
    pub steps: usize,
    pub dim: usize,
}

struct Derived {
    /// Drift matrix per block: first_matrix, then Xi_j Hbar_j.
    drifts: Vec<DenseMatrix>,
    /// Forcing direction Xi_j c_hat_j per correction block.
    f_dirs: Vec<Vec<f64>>,
    /// rho chain coefficients: rho_j = a_j rho_{j-1} - w_j^T z_j.
    rho_a: Vec<f64>,
    rho_w: Vec<Vec<f64>>,
    offsets: Vec<usize>,
    dims: Vec<usize>,
    total: usize,
    ell: usize,
    beta: f64,
}

impl Derived {
    fn build(sys: &CorrectionSystem) -> Self {
        let mut drifts = vec![sys.first_matrix.clone()];
        let mut f_dirs = Vec::new();
        let mut rho_a = Vec::new();
        let mut rho_w = Vec::new();
        for b in &sys.blocks {
            let k = b.hbar.cols();
            drifts.push(b.xi.matmul(&b.hbar));
            f_dirs.push(b.xi.matvec(&b.c_hat));
            // m = (I - Ibar Xi)^T n = n - Xi^T (leading k entries of n)
            let head: Vec<f64> = b.n_dir[..k].to_vec();
            let xt = b.xi.tr_matvec(&head);
            let m: Vec<f64> = b.n_dir.iter().zip(&xt).map(|(n, x)| n - x).collect();
            rho_a.push(dot(&m, &b.c_hat));
            rho_w.push(b.hbar.tr_matvec(&m));
        }
        let dims: Vec<usize> = drifts.iter().map(DenseMatrix::rows).collect();
        let mut offsets = vec![0usize];
        for d in &dims {
            offsets.push(offsets.last().unwrap() + d);
        }
        let total = *offsets.last().unwrap();
        Self {
            drifts,
            f_dirs,
            rho_a,
            rho_w,
            offsets,
            dims,
            total,
            ell: sys.ell,
            beta: sys.beta,
        }
    }

    fn block<'y>(&self, y: &'y [f64], j: usize) -> &'y [f64] {
        &y[self.offsets[j]..self.offsets[j + 1]]
    }

    /// Residual scalars rho_1..rho_J at a state; no explicit tau dependence.
    fn rho_chain(&self, y: &[f64]) -> Vec<f64> {
        let k1 = self.dims[0];
        let mut rho = vec![0.0; self.drifts.len()];
        rho[0] = self.block(y, 0)[k1 - 1];
        for j in 1..self.drifts.len() {
            rho[j] = self.rho_a[j - 1] * rho[j - 1] - dot(&self.rho_w[j - 1], self.block(y, j));
        }
        rho
    }

    /// Full right-hand side. `tau` must be positive when `ell >= 1`; the
    /// singular terms of block 1 are grouped as (1/tau)(p - l u) so the
    /// bracket cancels along the solution.
    fn eval(&self, tau: f64, y: &[f64], out: &mut [f64]) {
        let ell = self.ell as f64;
        let k1 = self.dims[0];
        let u = self.block(y, 0);
        {
            let o = &mut out[..k1];
            let drift = self.drifts[0].matvec(u);
            for (oi, di) in o.iter_mut().zip(&drift) {
                *oi = -di;
            }
            if self.ell >= 1 {
                debug_assert!(tau > 0.0);
                let p0 = self.beta / crate::dense::factorial(self.ell - 1);
                for (i, oi) in o.iter_mut().enumerate() {
                    let p = if i == 0 { p0 } else { 0.0 };
                    *oi += (p - ell * u[i]) / tau;
                }
            }
        }
        let rho = self.rho_chain(y);
        for j in 1..self.drifts.len() {
            let z = self.block(y, j);
            let drift = self.drifts[j].matvec(z);
            let lo = self.offsets[j];
            for (i, oi) in out[lo..lo + self.dims[j]].iter_mut().enumerate() {
                *oi = -drift[i] + self.f_dirs[j - 1][i] * rho[j - 1];
                if self.ell >= 1 {
                    *oi -= ell / tau * z[i];
                }
            }
        }
    }

    /// Factor the stage matrices (1 + sigma) I + h_impl * drift_j, with
    /// sigma = h_impl * l / tau.
    fn factor_stage(&self, h_impl: f64, tau: f64) -> Result<Vec<LuFactors>> {
        let sigma = if self.ell >= 1 {
            h_impl * self.ell as f64 / tau
        } else {
            0.0
        };
        self.drifts
            .iter()
            .map(|a| {
                let k = a.rows();
                let mut g = a.scaled(h_impl);
                for i in 0..k {
                    g[(i, i)] += 1.0 + sigma;
                }
                LuFactors::factor(&g).map_err(|_| Error::StiffFailure(tau))
            })
            .collect()
    }

    /// Solve (I - h_impl J(tau)) x = rhs block-forward through the coupling.
    fn solve_stage(&self, lus: &[LuFactors], h_impl: f64, rhs: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.total];
        let k1 = self.dims[0];
        let x0 = lus[0].solve_vec(&rhs[..k1]);
        x[..k1].copy_from_slice(&x0);
        let mut rho_prev = x0[k1 - 1];
        for j in 1..self.drifts.len() {
            let lo = self.offsets[j];
            let dim = self.dims[j];
            let mut b: Vec<f64> = rhs[lo..lo + dim].to_vec();
            axpy(&mut b, h_impl * rho_prev, &self.f_dirs[j - 1]);
            let xj = lus[j].solve_vec(&b);
            rho_prev = self.rho_a[j - 1] * rho_prev - dot(&self.rho_w[j - 1], &xj);
            x[lo..lo + dim].copy_from_slice(&xj);
        }
        x
    }
}

/// Series start at t0 for orders l >= 1 (the ODE has a 1/tau coefficient):
/// u(t0) comes from the phi Taylor head, each correction block starts on the
/// leading balance z(t0) = t0 * f(0) / (l + 1). Order 0 starts exactly at 0.
pub fn singular_start(sys: &CorrectionSystem, t0: f64) -> Result<Vec<f64>> {
    if sys.ell == 0 {
        return Ok(initial_state_zero(sys));
    }
    if t0 <= 0.0 || !t0.is_finite() {
        return Err(Error::SingularStart(sys.ell));
    }
    let derived = Derived::build(sys);
    let mut y = vec![0.0; derived.total];
    let k1 = derived.dims[0];
    let mut e1 = vec![0.0; k1];
    e1[0] = sys.beta;
    let u0 = phi_taylor(&sys.first_matrix.scaled(-t0), &e1, sys.ell);
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularStart(sys.ell));
    }
    y[..k1].copy_from_slice(&u0);

    // rho values at tau -> 0: the chain evaluated on (u(0), z = 0).
    let mut rho_prev = if k1 == 1 {
        sys.beta / crate::dense::factorial(sys.ell)
    } else {
        0.0
    };
    if k1 > 1 {
        // e_k^T (beta e_1 / l!) = 0 for k1 >= 2
        rho_prev = 0.0;
    }
    for (j, _b) in sys.blocks.iter().enumerate() {
        let lo = derived.offsets[j + 1];
        let dim = derived.dims[j + 1];
        let scale = t0 * rho_prev / (sys.ell as f64 + 1.0);
        for i in 0..dim {
            y[lo + i] = scale * derived.f_dirs[j][i];
        }
        rho_prev *= derived.rho_a[j];
    }
    Ok(y)
}

fn initial_state_zero(sys: &CorrectionSystem) -> Vec<f64> {
    let derived = Derived::build(sys);
    let mut y = vec![0.0; derived.total];
    y[0] = sys.beta; // u(0) = beta e_1 for l = 0
    y
}

/// Integrate the stacked system to t_end and assemble the newest bracket.
pub fn solve_correction(sys: &CorrectionSystem) -> Result<CorrectionSolution> {
    let derived = Derived::build(sys);
    let t_end = sys.t_end;
    assert!(t_end > 0.0);
    let (mut tau, mut y) = if sys.ell == 0 {
        (0.0, initial_state_zero(sys))
    } else {
        let t0 = 1e-8 * t_end;
        (t0, singular_start(sys, t0)?)
    };

    let mut h = if sys.ell == 0 { 1e-4 * t_end } else { tau };
    let mut est_error = 0.0;
    let mut steps = 0usize;

    let max_steps = 1_000_000usize;
    while tau < t_end {
        if steps > max_steps || h < 1e-15 * t_end {
            return Err(Error::StiffFailure(tau));
        }
        if tau + h > t_end {
            h = t_end - tau;
        }
        let gh = SD_GAMMA * h;

        // With l = 0 the stage matrices do not depend on the abscissa, so
        // one factorization serves the whole step.
        let lus_shared = if sys.ell == 0 {
            Some(derived.factor_stage(gh, tau + h)?)
        } else {
            None
        };

        let mut ks: Vec<Vec<f64>> = Vec::with_capacity(5);
        let mut failed = false;
        for i in 0..5 {
            let tau_i = tau + SD_C[i] * h;
            let mut yi = y.clone();
            for (j, kj) in ks.iter().enumerate() {
                axpy(&mut yi, h * SD_A[i][j], kj);
            }
            let mut f = vec![0.0; derived.total];
            derived.eval(tau_i, &yi, &mut f);
            let ki = match &lus_shared {
                Some(lus) => derived.solve_stage(lus, gh, &f),
                None => {
                    let lus = derived.factor_stage(gh, tau_i)?;
                    derived.solve_stage(&lus, gh, &f)
                }
            };
            if ki.iter().any(|v| !v.is_finite()) {
                failed = true;
                break;
            }
            ks.push(ki);
        }
        if failed {
            h *= 0.25;
            continue;
        }

        let mut y_n1 = y.clone();
        for (j, kj) in ks.iter().enumerate() {
            axpy(&mut y_n1, h * SD_A[4][j], kj);
        }

        // Embedded error estimate, filtered through the last stage matrix.
        let mut raw = vec![0.0; derived.total];
        for (j, kj) in ks.iter().enumerate() {
            if SD_ERR[j] != 0.0 {
                axpy(&mut raw, h * SD_ERR[j], kj);
            }
        }
        let est = match &lus_shared {
            Some(lus) => derived.solve_stage(lus, gh, &raw),
            None => {
                let lus = derived.factor_stage(gh, tau + h)?;
                derived.solve_stage(&lus, gh, &raw)
            }
        };

        let mut err_sq = 0.0;
        for i in 0..derived.total {
            let scale = ODE_ATOL + ODE_RTOL * y[i].abs().max(y_n1[i].abs());
            let e = est[i] / scale;
            err_sq += e * e;
        }
        let err = (err_sq / derived.total as f64).sqrt();

        if err <= 1.0 {
            tau += h;
            y = y_n1;
            est_error += vec_norm2(&est);
            steps += 1;
            let grow = (0.9 * err.max(1e-12).powf(-0.25)).clamp(0.3, 3.0);
            h *= grow;
        } else {
            h *= (0.9 * err.powf(-0.25)).clamp(0.1, 0.5);
        }
    }

    // Assemble the newest bracket per the residual formula.
    let k1 = derived.dims[0];
    let u_first = y[..k1].to_vec();
    let nblocks = sys.blocks.len();
    let mut z_blocks = Vec::with_capacity(nblocks);
    for j in 0..nblocks {
        z_blocks.push(derived.block(&y, j + 1).to_vec());
    }
    let (z_prime_last, bracket_last, residual_norm_last, rho_last) = if nblocks == 0 {
        (Vec::new(), Vec::new(), 0.0, 0.0)
    } else {
        let mut f_end = vec![0.0; derived.total];
        derived.eval(t_end, &y, &mut f_end);
        let j = nblocks; // derived index of the newest block
        let lo = derived.offsets[j];
        let dim = derived.dims[j];
        let z_prime = f_end[lo..lo + dim].to_vec();
        let rho = derived.rho_chain(&y);
        let block = &sys.blocks[nblocks - 1];
        let z = &y[lo..lo + dim];
        // bracket = c(t) - (Hbar + (l/t) Ibar) z - [z'; 0]
        let hz = block.hbar.matvec(z);
        let mut bracket: Vec<f64> = (0..dim + 1)
            .map(|i| block.c_hat[i] * rho[j - 1] - hz[i])
            .collect();
        for i in 0..dim {
            bracket[i] -= sys.ell as f64 / t_end * z[i] + z_prime[i];
        }
        let norm = vec_norm2(&bracket);
        let rho_sig = dot(&block.n_dir, &bracket);
        (z_prime, bracket, norm, rho_sig)
    };

    Ok(CorrectionSolution {
        u_first,
        z_blocks,
        z_prime_last,
        bracket_last,
        residual_norm_last,
        rho_last,
        est_error,
        steps,
        dim: derived.total,
    })
}
