//! Execute one configuration and materialize a machine-readable record.

use crate::config::{config_err, CliError, RunConfig};
use phikry::bounds::SectorAssumption;
use phikry::dense::{phi_col, vec_norm2};
use phikry::driver::{run_restarted, run_shift_invert, run_single_cycle, Method, PhiRequest};
use phikry::problems::laplacian2d_phi_exact;
use phikry::sparse::LinearOp;
use phikry::CsrOperator;
use serde::{Deserialize, Serialize};

pub const RUN_SCHEMA: &str = "phikry-run/1";
pub const CSV_SCHEMA: &str = "phikry-csv/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EllResult {
    pub ell: usize,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<f64>,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_integral: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_closed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_location_ok: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: String,
    pub config: RunConfig,
    pub n: usize,
    pub results: Vec<EllResult>,
    pub cycles: usize,
    pub matvecs: usize,
    pub solves: usize,
    pub breakdown: bool,
    pub wall_ms: f64,
}

impl RunRecord {
    pub fn all_converged(&self) -> bool {
        self.results.iter().all(|r| r.converged)
    }
}

pub fn execute(cfg: &RunConfig) -> Result<RunRecord, CliError> {
    let ells = cfg.parse_ells()?;
    let method = cfg.parse_method()?;
    let gamma = cfg.parse_gamma()?;
    let (a, v_default) = cfg.build_problem()?;
    let n = a.n();
    let v = cfg.starting_vector(n, v_default)?;

    let mut req = PhiRequest::new(cfg.t, ells.clone());
    req.tol = cfg.tol;
    req.k = cfg.k;
    req.q = cfg.q;
    req.gamma = gamma;
    req.max_cycles = cfg.max_cycles;
    if cfg.bounds {
        let apex = cfg
            .sector_a
            .ok_or_else(|| config_err("--bounds requires --sector-a"))?;
        let theta = cfg.sector_theta.unwrap_or(0.0);
        if apex < 0.0 || !(0.0..=std::f64::consts::FRAC_PI_2).contains(&theta) {
            return Err(config_err(
                "--sector-a must be >= 0 and --sector-theta in [0, pi/2]",
            ));
        }
        let sector = SectorAssumption::new(apex, theta);
        // Necessary-condition spot check of the asserted numerical range.
        if !phikry::bounds::sector_spot_check(&a, &sector, 100, cfg.seed) {
            eprintln!(
                "warning: a sampled Rayleigh quotient fell outside the asserted sector; \
                 the bound assumption does not hold"
            );
        }
        req.sector = Some(sector);
        req.bound_eps = cfg.eps;
    }

    let outcome = match method {
        Method::Arnoldi | Method::Harmonic => run_single_cycle(&a, &v, &req, method),
        Method::ShiftInvert => run_shift_invert(&a, &v, &req),
        Method::Tra | Method::Trha => run_restarted(&a, &v, &req, method),
    }
    .map_err(|e| match e {
        phikry::Error::InvalidRequest(_) => config_err(e.to_string()),
        other => CliError::Solver(other.to_string()),
    })?;

    let oracles = oracle_solutions(cfg, &a, &v, &ells)?;
    let finals = outcome.report.final_residuals().to_vec();
    let mut results = Vec::with_capacity(ells.len());
    for (i, &ell) in ells.iter().enumerate() {
        let error = oracles.as_ref().map(|ys| {
            let diff: f64 = outcome.solutions[i]
                .iter()
                .zip(&ys[i])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            diff / vec_norm2(&ys[i]).max(1e-300)
        });
        let (bi, bc, loc) = match outcome.report.bounds.as_ref().and_then(|b| b.get(i)) {
            Some(d) => (Some(d.integral), Some(d.closed), Some(d.location_ok)),
            None => (None, None, None),
        };
        results.push(EllResult {
            ell,
            residual: finals[i],
            error,
            converged: outcome.report.converged[i],
            bound_integral: bi,
            bound_closed: bc,
            bound_location_ok: loc,
        });
    }

    Ok(RunRecord {
        schema: RUN_SCHEMA.to_string(),
        config: cfg.clone(),
        n,
        results,
        cycles: outcome.report.cycles,
        matvecs: outcome.report.matvecs,
        solves: outcome.report.solves,
        breakdown: outcome.report.breakdown,
        wall_ms: outcome.report.wall.as_secs_f64() * 1e3,
    })
}

/// Reference solutions for the error column.
fn oracle_solutions(
    cfg: &RunConfig,
    a: &CsrOperator,
    v: &[f64],
    ells: &[usize],
) -> Result<Option<Vec<Vec<f64>>>, CliError> {
    match cfg.oracle.as_str() {
        "none" => Ok(None),
        "dense" => {
            let n = a.n();
            if cfg.problem == "laplacian2d" {
                // Exact diagonalization in the discrete sine basis.
                return Ok(Some(laplacian2d_phi_exact(
                    cfg.n, cfg.scale, cfg.t, v, ells,
                )));
            }
            if n > 5000 {
                return Err(config_err(format!(
                    "--oracle dense is limited to n <= 5000 (got n = {n})"
                )));
            }
            let m = a.to_dense().scaled(-cfg.t);
            let smax = ells.iter().copied().max().unwrap_or(0);
            let us = phi_col(&m, v, smax)
                .map_err(|e| CliError::Solver(format!("dense oracle failed: {e}")))?;
            Ok(Some(ells.iter().map(|&l| us[l].clone()).collect()))
        }
        "taylor" => {
            let norm = cfg.t * a.one_norm();
            if norm > 8.0 {
                return Err(config_err(format!(
                    "--oracle taylor needs t * ||A||_1 <= 8 to stay cancellation-free, got {norm:.2}"
                )));
            }
            let smax = ells.iter().copied().max().unwrap_or(0);
            Ok(Some(
                ells.iter()
                    .map(|&l| taylor_action(a, v, cfg.t, l, smax))
                    .collect(),
            ))
        }
        other => Err(config_err(format!(
            "--oracle: {other:?} not one of none|dense|taylor"
        ))),
    }
}

/// Matrix-free truncated series phi_l(-tA) v = sum_m (-tA)^m v / (m+l)!.
fn taylor_action(a: &CsrOperator, v: &[f64], t: f64, ell: usize, _smax: usize) -> Vec<f64> {
    let n = a.n();
    let fact: f64 = (1..=ell).map(|x| x as f64).product();
    let mut term: Vec<f64> = v.iter().map(|x| x / fact).collect();
    let mut acc = term.clone();
    for m in 1..200 {
        let mut next = vec![0.0; n];
        a.apply(&term, &mut next);
        let denom = (m + ell) as f64;
        for x in &mut next {
            *x *= -t / denom;
        }
        term = next;
        for (ai, ti) in acc.iter_mut().zip(&term) {
            *ai += ti;
        }
        if vec_norm2(&term) < 1e-18 * vec_norm2(&acc).max(1e-300) {
            break;
        }
    }
    acc
}
