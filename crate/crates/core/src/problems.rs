//! Test-problem generators: 2-D Laplacian and advection-diffusion stencils on
//! the unit square, the negated `lesp` tridiagonal gallery matrix, and the
//! polynomial right-hand side.
//!
//! Grid ordering is row-major over (j*N + i) with i the x-index running
//! fastest; every generator and right-hand-side builder uses the same map.

use crate::sparse::CsrOperator;

/// Five-point finite-difference matrix of the negative 2-D Laplacian on the
/// unit square with homogeneous Dirichlet boundaries, scaled by `scale`:
/// diagonal 4/h^2, interior neighbor entries -1/h^2, h = 1/(N+1). The result
/// is symmetric positive definite.
pub fn gen_laplacian2d(n_side: usize, scale: f64) -> CsrOperator {
    assert!(n_side >= 1);
    let h = 1.0 / (n_side as f64 + 1.0);
    let inv_h2 = scale / (h * h);
    let n = n_side * n_side;
    let mut trip = Vec::with_capacity(5 * n);
    for j in 0..n_side {
        for i in 0..n_side {
            let row = j * n_side + i;
            trip.push((row, row, 4.0 * inv_h2));
            if i > 0 {
                trip.push((row, row - 1, -inv_h2));
            }
            if i + 1 < n_side {
                trip.push((row, row + 1, -inv_h2));
            }
            if j > 0 {
                trip.push((row, row - n_side, -inv_h2));
            }
            if j + 1 < n_side {
                trip.push((row, row + n_side, -inv_h2));
            }
        }
    }
    CsrOperator::from_triplets(n, &trip)
        .expect("stencil triplets are valid")
        .with_name(format!("laplacian2d(N={n_side}, scale={scale})"))
}

/// Semidiscrete advection-diffusion operator for
/// u_t = eps (u_xx + u_yy) - beta (u_x + u_y) on the unit square with
/// homogeneous Dirichlet boundaries, central differences for both terms.
/// Returns (A, u0) such that the linear part reads u' = -A u, with u0 the
/// initial condition 256 (x y (1-x) (1-y))^2 + 0.3 sampled at interior nodes.
pub fn gen_advdiff2d(n_side: usize, eps: f64, beta: f64) -> (CsrOperator, Vec<f64>) {
    assert!(n_side >= 2);
    let h = 1.0 / (n_side as f64 + 1.0);
    let diff = eps / (h * h);
    let adv = beta / (2.0 * h);
    let n = n_side * n_side;
    let mut trip = Vec::with_capacity(5 * n);
    let mut u0 = vec![0.0; n];
    for j in 0..n_side {
        for i in 0..n_side {
            let row = j * n_side + i;
            trip.push((row, row, 4.0 * diff));
            // A = -L: the +x/+y neighbor of L is (diff - adv), negated here.
            if i > 0 {
                trip.push((row, row - 1, -diff - adv));
            }
            if i + 1 < n_side {
                trip.push((row, row + 1, -diff + adv));
            }
            if j > 0 {
                trip.push((row, row - n_side, -diff - adv));
            }
            if j + 1 < n_side {
                trip.push((row, row + n_side, -diff + adv));
            }
            let x = (i as f64 + 1.0) * h;
            let y = (j as f64 + 1.0) * h;
            let w = x * y * (1.0 - x) * (1.0 - y);
            u0[row] = 256.0 * w * w + 0.3;
        }
    }
    let a = CsrOperator::from_triplets(n, &trip)
        .expect("stencil triplets are valid")
        .with_name(format!("advdiff2d(N={n_side}, eps={eps}, beta={beta})"));
    (a, u0)
}

/// Negated `lesp` gallery matrix: tridiagonal with real, sensitive
/// eigenvalues. The underlying construction has diagonal -(2j+3),
/// superdiagonal 2..n and subdiagonal 1/2..1/n; this returns its negation,
/// whose spectrum lies in the right half plane.
pub fn gen_lesp(n: usize) -> CsrOperator {
    assert!(n >= 2);
    let mut trip = Vec::with_capacity(3 * n - 2);
    for j in 0..n {
        trip.push((j, j, 2.0 * (j as f64 + 1.0) + 3.0));
        if j + 1 < n {
            let x = j as f64 + 2.0;
            trip.push((j, j + 1, -x));
            trip.push((j + 1, j, -1.0 / x));
        }
    }
    CsrOperator::from_triplets(n, &trip)
        .expect("tridiagonal triplets are valid")
        .with_name(format!("lesp({n})"))
}

/// Evaluations of g(x, y) = 30 x (1-x) y (1-y) at the interior grid points,
/// ordered consistently with `gen_laplacian2d`.
pub fn gen_rhs_poly(n_side: usize) -> Vec<f64> {
    assert!(n_side >= 1);
    let h = 1.0 / (n_side as f64 + 1.0);
    let mut v = vec![0.0; n_side * n_side];
    for j in 0..n_side {
        for i in 0..n_side {
            let x = (i as f64 + 1.0) * h;
            let y = (j as f64 + 1.0) * h;
            // Grouped so the x <-> y symmetry of g is exact in floating point.
            v[j * n_side + i] = 30.0 * ((x * (1.0 - x)) * (y * (1.0 - y)));
        }
    }
    v
}

/// Analytic Dirichlet eigenvalues of `gen_laplacian2d(n_side, scale)`:
/// lambda_{p,q} = scale * (4/h^2) (sin^2(p pi h / 2) + sin^2(q pi h / 2)).
pub fn laplacian2d_eigenvalue(n_side: usize, scale: f64, p: usize, q: usize) -> f64 {
    let h = 1.0 / (n_side as f64 + 1.0);
    let s = |m: usize| {
        let t = (m as f64 * std::f64::consts::PI * h / 2.0).sin();
        t * t
    };
    scale * 4.0 / (h * h) * (s(p) + s(q))
}

/// Exact evaluation of phi_l(-t A) v for the 2-D Laplacian by expanding v in
/// the discrete sine eigenbasis. Serves as a ground-truth oracle at any n.
pub fn laplacian2d_phi_exact(
    n_side: usize,
    scale: f64,
    t: f64,
    v: &[f64],
    ells: &[usize],
) -> Vec<Vec<f64>> {
    use crate::dense::{factorial, phi_col, DenseMatrix};
    let n = n_side * n_side;
    assert_eq!(v.len(), n);
    let h = 1.0 / (n_side as f64 + 1.0);
    // One-dimensional sine modes; rows are modes, columns grid points.
    let mut sine = DenseMatrix::zeros(n_side, n_side);
    let norm = (2.0 * h).sqrt();
    for p in 0..n_side {
        for i in 0..n_side {
            sine[(p, i)] =
                norm * ((p as f64 + 1.0) * (i as f64 + 1.0) * std::f64::consts::PI * h).sin();
        }
    }
    // Coefficients c_{p,q} = sum_{i,j} v_{i,j} s_p(i) s_q(j), by two
    // one-dimensional transforms.
    let mut half = vec![0.0; n]; // indexed q*n_side + p after first pass? keep (j, p)
    for j in 0..n_side {
        for p in 0..n_side {
            let mut acc = 0.0;
            for i in 0..n_side {
                acc += v[j * n_side + i] * sine[(p, i)];
            }
            half[j * n_side + p] = acc;
        }
    }
    let mut coef = vec![0.0; n];
    for p in 0..n_side {
        for q in 0..n_side {
            let mut acc = 0.0;
            for j in 0..n_side {
                acc += half[j * n_side + p] * sine[(q, j)];
            }
            coef[q * n_side + p] = acc;
        }
    }
    let smax = ells.iter().copied().max().unwrap_or(0);
    // phi_l of each scalar eigenvalue via the dense kernel on 1x1 blocks.
    let mut scaled = vec![vec![0.0; n]; smax + 1];
    for p in 0..n_side {
        for q in 0..n_side {
            let lam = laplacian2d_eigenvalue(n_side, scale, p + 1, q + 1);
            let m = DenseMatrix::from_rows(1, 1, &[-t * lam]);
            let phis = phi_col(&m, &[1.0], smax)
                .unwrap_or_else(|_| (0..=smax).map(|l| vec![1.0 / factorial(l)]).collect());
            for (l, u) in phis.iter().enumerate() {
                scaled[l][q * n_side + p] = u[0] * coef[q * n_side + p];
            }
        }
    }
    // Transform back.
    let mut out = Vec::with_capacity(ells.len());
    for &l in ells {
        let data = &scaled[l];
        let mut half = vec![0.0; n];
        for q in 0..n_side {
            for i in 0..n_side {
                let mut acc = 0.0;
                for p in 0..n_side {
                    acc += data[q * n_side + p] * sine[(p, i)];
                }
                half[q * n_side + i] = acc;
            }
        }
        let mut y = vec![0.0; n];
        for j in 0..n_side {
            for i in 0..n_side {
                let mut acc = 0.0;
                for q in 0..n_side {
                    acc += half[q * n_side + i] * sine[(q, j)];
                }
                y[j * n_side + i] = acc;
            }
        }
        out.push(y);
    }
    out
}
