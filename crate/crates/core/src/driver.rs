//! Solver drivers: single-cycle runs and the thick-restarted algorithms
//! evaluating all requested phi orders simultaneously in one search subspace.

use crate::arnoldi::{
    arnoldi, arnoldi_extend, compress_restart, null_direction, residual_direction, si_arnoldi,
    ArnoldiDecomp,
};
use crate::correction::{solve_correction, CorrectionSystem, CycleBlock};
use crate::dense::{axpy, vec_norm2, DenseMatrix};
use crate::eig::{dense_eig, hess_eig, EigenDecomp};
use crate::error::{Error, Result};
use crate::par;
use crate::projection::{
    arnoldi_phi_approx, build_tk, harmonic_phi_approx, si_phi_approx, xi_matrix,
};
use crate::shifted::ShiftedSolver;
use crate::sparse::{CountingOp, LinearOp};
use std::time::Instant;

/// Which approximation drives a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Single-cycle orthogonal projection.
    Arnoldi,
    /// Single-cycle oblique (harmonic) projection.
    Harmonic,
    /// Single-cycle shift-and-invert.
    ShiftInvert,
    /// Thick-restarted with Ritz-vector deflation.
    Tra,
    /// Thick-restarted with harmonic Ritz deflation.
    Trha,
}

impl Method {
    pub fn is_restarted(self) -> bool {
        matches!(self, Method::Tra | Method::Trha)
    }

    pub fn uses_gamma(self) -> bool {
        matches!(self, Method::Harmonic | Method::ShiftInvert | Method::Trha)
    }
}

/// A solve request: evaluate phi_l(-tA) v for every l in `ells`.
#[derive(Debug, Clone)]
pub struct PhiRequest {
    pub t: f64,
    pub ells: Vec<usize>,
    pub tol: f64,
    pub k: usize,
    pub q: usize,
    /// Harmonic / shift-and-invert shift; `None` selects 0.01 t.
    pub gamma: Option<f64>,
    pub max_cycles: usize,
    /// When set, error-bound diagnostics for the first cycle are attached to
    /// the report, under the asserted numerical-range sector.
    pub sector: Option<crate::bounds::SectorAssumption>,
    /// Bound parameter; `None` picks the sector default.
    pub bound_eps: Option<f64>,
}

impl PhiRequest {
    pub fn new(t: f64, ells: Vec<usize>) -> Self {
        Self {
            t,
            ells,
            tol: 1e-8,
            k: 30,
            q: 5,
            gamma: None,
            max_cycles: 100,
            sector: None,
            bound_eps: None,
        }
    }

    pub fn gamma_value(&self) -> f64 {
        self.gamma.unwrap_or(0.01 * self.t)
    }

    pub fn validate(&self, n: usize, method: Method) -> Result<()> {
        if self.t <= 0.0 || !self.t.is_finite() {
            return Err(Error::InvalidRequest("t must be positive".into()));
        }
        if self.ells.is_empty() {
            return Err(Error::InvalidRequest(
                "at least one phi order is required".into(),
            ));
        }
        if self.tol <= 0.0 {
            return Err(Error::InvalidRequest("tol must be positive".into()));
        }
        if self.k == 0 || self.k > n {
            return Err(Error::InvalidRequest(format!(
                "k must satisfy 0 < k <= n = {n}, got {}",
                self.k
            )));
        }
        if method.is_restarted() && self.q + 1 >= self.k {
            return Err(Error::InvalidRequest(format!(
                "q + 1 must stay below k, got q = {}, k = {}",
                self.q, self.k
            )));
        }
        if method.uses_gamma() && self.gamma_value() <= 0.0 {
            return Err(Error::InvalidRequest("gamma must be positive".into()));
        }
        Ok(())
    }
}

/// First-cycle error-bound diagnostics for one order: the residual-norm
/// multipliers turned into absolute bound values.
#[derive(Debug, Clone)]
pub struct BoundDiag {
    pub ell: usize,
    pub integral: f64,
    pub closed: f64,
    /// Necessary-condition check on the projected spectrum's location
    /// inside the asserted sector.
    pub location_ok: bool,
}

/// Per-run observability: residual histories, operation counts, timings.
#[derive(Debug, Clone, Default)]
pub struct MethodReport {
    /// `residual_history[cycle][i]` pairs with `ells[i]`.
    pub residual_history: Vec<Vec<f64>>,
    pub ells: Vec<usize>,
    pub converged: Vec<bool>,
    pub cycles: usize,
    pub matvecs: usize,
    /// Shifted solves consumed (shift-and-invert only).
    pub solves: usize,
    pub wall: std::time::Duration,
    /// Stacked correction dimension per restarted cycle.
    pub stack_dims: Vec<usize>,
    /// Accumulated ODE error estimates per cycle (max over ells).
    pub ode_error: f64,
    pub breakdown: bool,
    /// First-cycle bound diagnostics, present when a sector was asserted.
    pub bounds: Option<Vec<BoundDiag>>,
    /// Vectors retained at each restart; deviates from the requested q only
    /// when a conjugate pair had to be kept whole.
    pub retained_q: Vec<usize>,
}

impl MethodReport {
    pub fn all_converged(&self) -> bool {
        !self.converged.is_empty() && self.converged.iter().all(|&c| c)
    }

    pub fn final_residuals(&self) -> &[f64] {
        self.residual_history.last().map_or(&[], Vec::as_slice)
    }
}

/// Solutions plus report; `solutions[i]` pairs with `report.ells[i]`.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub solutions: Vec<Vec<f64>>,
    pub report: MethodReport,
}

/// Expand the previous residual direction in the new coordinate basis:
/// c_hat = W_{q+1}^H n_prev padded with zeros to length k+1. The expansion is
/// verified against the explicit bases; a mismatch beyond
/// 1e-10 * max(1, ||n_prev||) is an error.
pub fn c_vector(
    w_q1: &DenseMatrix,
    n_prev: &[f64],
    old_basis: &[Vec<f64>],
    new_basis: &[Vec<f64>],
    k_next: usize,
) -> Result<Vec<f64>> {
    let q1 = w_q1.cols();
    assert_eq!(w_q1.rows(), n_prev.len());
    let mut c_hat = vec![0.0; k_next + 1];
    for j in 0..q1 {
        let mut acc = 0.0;
        for i in 0..n_prev.len() {
            acc += w_q1[(i, j)] * n_prev[i];
        }
        c_hat[j] = acc;
    }
    // Verification: V^{new} c_hat must reproduce V^{old} n_prev.
    let n = old_basis[0].len();
    let mut lhs = vec![0.0; n];
    for (j, col) in new_basis.iter().enumerate().take(q1) {
        axpy(&mut lhs, c_hat[j], col);
    }
    let mut rhs = vec![0.0; n];
    for (col, &ci) in old_basis.iter().zip(n_prev) {
        axpy(&mut rhs, ci, col);
    }
    let err: f64 = lhs
        .iter()
        .zip(&rhs)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if err > 1e-10 * vec_norm2(n_prev).max(1.0) {
        return Err(Error::BasisMismatch(err));
    }
    Ok(c_hat)
}

/// Select q eigenpairs of smallest magnitude and realify them into columns;
/// a complex pair contributes its real and imaginary parts and bumps q by
/// one when it would otherwise be cut in half (capped at k - 2, in which
/// case the pair is dropped instead).
fn select_deflation(dec: &EigenDecomp, q_want: usize, k: usize) -> DenseMatrix {
    let korder = dec.order();
    let mut order: Vec<usize> = (0..korder).collect();
    order.sort_by(|&x, &y| {
        dec.values[x]
            .norm()
            .total_cmp(&dec.values[y].norm())
            .then(dec.values[x].im.abs().total_cmp(&dec.values[y].im.abs()))
    });
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut used = vec![false; korder];
    let mut budget = q_want;
    for &idx in &order {
        if cols.len() >= budget {
            break;
        }
        if used[idx] {
            continue;
        }
        used[idx] = true;
        let val = dec.values[idx];
        if val.im == 0.0 && dec.conj_pair[idx].is_none() {
            cols.push(dec.vectors[idx].iter().map(|c| c.re).collect());
        } else {
            if let Some(partner) = dec.conj_pair[idx] {
                used[partner] = true;
            }
            // Need room for two columns.
            if cols.len() + 2 > budget {
                if budget < k.saturating_sub(2) {
                    budget += 1;
                } else {
                    continue;
                }
            }
            cols.push(dec.vectors[idx].iter().map(|c| c.re).collect());
            cols.push(dec.vectors[idx].iter().map(|c| c.im).collect());
        }
    }
    DenseMatrix::from_columns(&cols)
}

/// Projected matrix of the current cycle for deflation and corrections:
/// Xi Hbar for the harmonic method (equal to T_k on a Hessenberg cycle),
/// the leading square block H_k for the orthogonal method.
fn projected_matrix(
    d: &ArnoldiDecomp,
    gamma: f64,
    harmonic: bool,
    fresh: bool,
) -> Result<DenseMatrix> {
    if !harmonic {
        return Ok(d.h_square());
    }
    if fresh {
        build_tk(&d.h_square(), d.h_sub(), gamma)
    } else {
        Ok(xi_matrix(&d.hbar, gamma)?.matmul(&d.hbar))
    }
}

fn eig_of(m: &DenseMatrix, fresh: bool) -> Result<EigenDecomp> {
    if fresh {
        hess_eig(m).or_else(|_| dense_eig(m))
    } else {
        dense_eig(m)
    }
}

/// First-cycle bound diagnostics under the request's sector assumption.
fn bound_diagnostics(
    d: &ArnoldiDecomp,
    projected: &DenseMatrix,
    req: &PhiRequest,
    residuals: &[f64],
) -> Option<Vec<BoundDiag>> {
    let sector = req.sector?;
    let diags = req
        .ells
        .iter()
        .enumerate()
        .map(|(i, &ell)| {
            match crate::bounds::bound_inputs_from_decomp(
                d,
                projected,
                req.t,
                ell,
                req.bound_eps,
                sector,
            ) {
                Ok(inp) => {
                    let location_ok = crate::bounds::location_check(&inp.values, &sector);
                    let integral =
                        crate::bounds::bound_integral(&inp).map_or(f64::NAN, |m| m * residuals[i]);
                    let closed =
                        crate::bounds::bound_closed(&inp).map_or(f64::NAN, |m| m * residuals[i]);
                    BoundDiag {
                        ell,
                        integral,
                        closed,
                        location_ok,
                    }
                }
                Err(_) => BoundDiag {
                    ell,
                    integral: f64::NAN,
                    closed: f64::NAN,
                    location_ok: false,
                },
            }
        })
        .collect();
    Some(diags)
}

/// Retry wrapper for the gamma-dependent projections: a singular I + gamma H
/// bumps gamma by 1% up to three times.
fn with_gamma_retry<T>(gamma0: f64, mut f: impl FnMut(f64) -> Result<T>) -> Result<(T, f64)> {
    let mut gamma = gamma0;
    let mut last_err = None;
    for _ in 0..4 {
        match f(gamma) {
            Ok(v) => return Ok((v, gamma)),
            Err(Error::SingularShift(_)) => {
                last_err = Some(Error::SingularShift(gamma));
                gamma *= 1.01;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or(Error::SingularShift(gamma0)))
}

/// One decomposition, all requested orders, no restarting.
pub fn run_single_cycle(
    a: &dyn LinearOp,
    v: &[f64],
    req: &PhiRequest,
    method: Method,
) -> Result<RunOutcome> {
    req.validate(a.dim(), method)?;
    let started = Instant::now();
    let counter = CountingOp::new(a);
    let gamma = req.gamma_value();

    let (approxes, decomp, projected) = match method {
        Method::Arnoldi => {
            let d = arnoldi(&counter, v, req.k);
            let h = d.h_square();
            (arnoldi_phi_approx(&d, req.t, &req.ells)?, d, h)
        }
        Method::Harmonic => {
            let d = arnoldi(&counter, v, req.k);
            let ((tk, w), _gamma_used) = with_gamma_retry(gamma, |g| {
                let tk = build_tk(&d.h_square(), d.h_sub(), g)?;
                let w = residual_direction(&d.hbar, g)?;
                Ok((tk, w))
            })?;
            let approxes = harmonic_phi_approx(&d, &tk, &w, req.t, &req.ells)?;
            (approxes, d, tk)
        }
        Method::ShiftInvert => {
            return Err(Error::InvalidRequest(
                "shift-and-invert needs a concrete CSR operator; use run_shift_invert".into(),
            ))
        }
        Method::Tra | Method::Trha => {
            return Err(Error::InvalidRequest(
                "restarted methods go through run_restarted".into(),
            ))
        }
    };

    let residuals: Vec<f64> = approxes.iter().map(|p| p.residual_norm).collect();
    let solutions: Vec<Vec<f64>> = approxes.iter().map(|p| decomp.expand(&p.coeffs)).collect();
    let converged: Vec<bool> = residuals.iter().map(|&r| r <= req.tol).collect();
    let bounds = bound_diagnostics(&decomp, &projected, req, &residuals);
    let report = MethodReport {
        residual_history: vec![residuals],
        ells: req.ells.clone(),
        converged,
        cycles: 1,
        matvecs: counter.count(),
        solves: 0,
        wall: started.elapsed(),
        stack_dims: vec![],
        ode_error: 0.0,
        breakdown: decomp.breakdown.is_some(),
        bounds,
        retained_q: vec![],
    };
    Ok(RunOutcome { solutions, report })
}

/// Shift-and-invert single-cycle entry point over a concrete CSR operator.
pub fn run_shift_invert(
    a: &crate::sparse::CsrOperator,
    v: &[f64],
    req: &PhiRequest,
) -> Result<RunOutcome> {
    req.validate(a.n(), Method::ShiftInvert)?;
    let started = Instant::now();
    let gamma = req.gamma_value();
    let counter = CountingOp::new(a);
    let solver = ShiftedSolver::new(a, gamma)?;
    let d = si_arnoldi(&solver, v, req.k)?;
    let solves = d.k();
    let approxes = si_phi_approx(&d, gamma, req.t, &req.ells, &counter)?;
    let residuals: Vec<f64> = approxes.iter().map(|p| p.residual_norm).collect();
    let solutions: Vec<Vec<f64>> = approxes.iter().map(|p| d.expand(&p.coeffs)).collect();
    let converged: Vec<bool> = residuals.iter().map(|&r| r <= req.tol).collect();
    let report = MethodReport {
        residual_history: vec![residuals],
        ells: req.ells.clone(),
        converged,
        cycles: 1,
        matvecs: counter.count(),
        solves,
        wall: started.elapsed(),
        stack_dims: vec![],
        ode_error: 0.0,
        breakdown: d.breakdown.is_some(),
        bounds: None,
        retained_q: vec![],
    };
    Ok(RunOutcome { solutions, report })
}

/// The thick-restarted driver (harmonic or Ritz deflation).
///
/// Cycle 1 is a k-step Arnoldi sweep with the closed-form residuals; each
/// further cycle retains q deflation vectors plus the residual direction,
/// extends back to k steps ((k - q) matvecs), solves the stacked correction
/// ODEs for every order, updates the accumulated solutions and re-checks the
/// residual norms. Non-convergence within `max_cycles` is reported through
/// the `converged` flags of the returned report, with the best-so-far
/// solutions included.
pub fn run_restarted(
    a: &dyn LinearOp,
    v: &[f64],
    req: &PhiRequest,
    method: Method,
) -> Result<RunOutcome> {
    if !method.is_restarted() {
        return run_single_cycle(a, v, req, method);
    }
    req.validate(a.dim(), method)?;
    let harmonic = method == Method::Trha;
    let started = Instant::now();
    let counter = CountingOp::new(a);
    let gamma = if harmonic { req.gamma_value() } else { 0.0 };
    let nells = req.ells.len();

    let mut report = MethodReport {
        ells: req.ells.clone(),
        converged: vec![false; nells],
        ..Default::default()
    };

    // Cycle 1.
    let decomp = arnoldi(&counter, v, req.k);
    let ((mk, w1), gamma) = with_gamma_retry(gamma.max(0.0), |g| {
        let g_eff = if harmonic { g } else { 0.0 };
        let mk = projected_matrix(&decomp, g_eff, harmonic, true)?;
        let w = residual_direction(&decomp.hbar, g_eff)?;
        Ok((mk, w))
    })?;
    let first_matrix = mk.clone();
    let beta = decomp.beta;

    let approxes = if harmonic {
        harmonic_phi_approx(&decomp, &mk, &w1, req.t, &req.ells)?
    } else {
        arnoldi_phi_approx(&decomp, req.t, &req.ells)?
    };
    let mut st = CycleState {
        solutions: approxes.iter().map(|p| decomp.expand(&p.coeffs)).collect(),
        residuals: approxes.iter().map(|p| p.residual_norm).collect(),
        decomp,
        projected: mk,
        n_dir: w1,
        blocks: Vec::new(),
    };
    report.bounds = bound_diagnostics(&st.decomp, &st.projected, req, &st.residuals);
    report.residual_history.push(st.residuals.clone());
    report.cycles = 1;
    report.breakdown |= st.decomp.breakdown.is_some();

    while report.cycles < req.max_cycles {
        if st.residuals.iter().all(|&r| r <= req.tol) || st.decomp.breakdown.is_some() {
            break;
        }

        // Deflate: q smallest-magnitude eigenpairs of the projected matrix.
        let dec = eig_of(&st.projected, report.cycles == 1)?;
        let ritz = select_deflation(&dec, req.q, req.k);
        let rb = compress_restart(&st.decomp, &ritz, &st.n_dir)?;
        report.retained_q.push(rb.q);
        let c_hat = c_vector(
            &rb.w_q1,
            &st.n_dir,
            &st.decomp.basis,
            &rb.decomp.basis,
            req.k,
        )?;

        let mut next = rb.decomp;
        arnoldi_extend(&counter, &mut next, req.k);
        report.breakdown |= next.breakdown.is_some();
        let k_now = next.k();
        st.decomp = next;

        let (xi, _gamma_now) = with_gamma_retry(gamma, |g| {
            let g_eff = if harmonic { g } else { 0.0 };
            xi_matrix(&st.decomp.hbar, g_eff)
        })?;
        st.projected = xi.matmul(&st.decomp.hbar);
        st.n_dir = null_direction(&st.decomp.hbar, if harmonic { gamma } else { 0.0 })?;

        let mut c_hat_now = c_hat;
        c_hat_now.truncate(k_now + 1);
        st.blocks.push(CycleBlock {
            xi,
            hbar: st.decomp.hbar.clone(),
            c_hat: c_hat_now,
            n_dir: st.n_dir.clone(),
        });

        // Per-order stacked correction solves; independent, hence parallel.
        let sys_template = CorrectionSystem {
            first_matrix: first_matrix.clone(),
            beta,
            blocks: st.blocks.clone(),
            ell: 0,
            t_end: req.t,
        };
        let results: Vec<Result<crate::correction::CorrectionSolution>> =
            par::map_indexed(nells, |i| {
                let mut sys = sys_template.clone();
                sys.ell = req.ells[i];
                solve_correction(&sys)
            });

        report.cycles += 1;
        report.stack_dims.push(
            sys_template
                .blocks
                .iter()
                .map(|b| b.hbar.cols())
                .sum::<usize>()
                + first_matrix.rows(),
        );
        let mut max_ode_err: f64 = 0.0;
        for (i, res) in results.into_iter().enumerate() {
            let sol = res?;
            max_ode_err = max_ode_err.max(sol.est_error);
            let z = sol.z_blocks.last().expect("restarted cycle has a block");
            let update = st.decomp.expand(z);
            axpy(&mut st.solutions[i], 1.0, &update);
            st.residuals[i] = if st.decomp.breakdown.is_some() {
                // Invariant span: the final basis column is void, so the
                // bracket's last coordinate does not reach the residual.
                let b = &sol.bracket_last;
                vec_norm2(&b[..b.len() - 1])
            } else {
                sol.residual_norm_last
            };
        }
        report.ode_error = report.ode_error.max(max_ode_err);
        report.residual_history.push(st.residuals.clone());

        if st.decomp.breakdown.is_some() {
            // Invariant subspace: the projected solves are exact now.
            break;
        }
    }

    report.converged = st.residuals.iter().map(|&r| r <= req.tol).collect();
    report.matvecs = counter.count();
    report.wall = started.elapsed();
    Ok(RunOutcome {
        solutions: st.solutions,
        report,
    })
}

/// Per-cycle state of a restarted solve: the live decomposition, its
/// projected matrix, the residual direction in basis coordinates, the
/// accumulated approximations with their residual norms, and the
/// correction-block history feeding the stacked ODEs.
struct CycleState {
    decomp: ArnoldiDecomp,
    projected: DenseMatrix,
    n_dir: Vec<f64>,
    solutions: Vec<Vec<f64>>,
    residuals: Vec<f64>,
    blocks: Vec<CycleBlock>,
}
