//! Run configuration: CLI flags, JSON (de)serialization and problem setup.

use clap::Args;
use phikry::driver::Method;
use phikry::market::load_matrix_market;
use phikry::problems::{gen_advdiff2d, gen_laplacian2d, gen_lesp, gen_rhs_poly};
use phikry::CsrOperator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config files: exit code 1.
    Config(String),
    /// A solve failed or did not converge: exit code 2.
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Solver(m) => m,
        }
    }
}

pub fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// One experiment: problem, method, parameters. Doubles as the JSON config
/// schema consumed by `compare`.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Problem: laplacian2d | advdiff2d | lesp | mtx:PATH
    #[arg(long, default_value = "laplacian2d")]
    pub problem: String,

    /// Grid points per side (laplacian2d/advdiff2d) or matrix order (lesp).
    #[arg(long, default_value_t = 50)]
    pub n: usize,

    /// Scale factor applied to the Laplacian stencil.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,

    /// Diffusion coefficient (advdiff2d).
    #[arg(long, default_value_t = 0.02)]
    pub eps1: f64,

    /// Advection coefficient (advdiff2d).
    #[arg(long, default_value_t = -0.02, allow_hyphen_values = true)]
    pub beta1: f64,

    /// Evaluation time.
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,

    /// Comma-separated phi orders, e.g. "1,2,3,4".
    #[arg(long, default_value = "0,1,2,3")]
    pub ells: String,

    /// arnoldi | harmonic | si | tra | trha
    #[arg(long, default_value = "trha")]
    pub method: String,

    /// Krylov subspace dimension.
    #[arg(long, default_value_t = 30)]
    pub k: usize,

    /// Retained approximate eigenvectors per restart.
    #[arg(long, default_value_t = 5)]
    pub q: usize,

    /// Residual convergence tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,

    /// Shift for harmonic / shift-and-invert methods: a number or "0.01t".
    #[arg(long, default_value = "0.01t")]
    pub gamma: String,

    #[arg(long, default_value_t = 100)]
    pub max_cycles: usize,

    /// Seed for the random starting vector (when --v random).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Starting vector: default | ones | poly | random
    #[arg(long, default_value = "default")]
    pub v: String,

    /// Reference solution for the error column: none | dense | taylor
    #[arg(long, default_value = "none")]
    pub oracle: String,

    /// Attach error-bound diagnostics (needs --sector-a).
    #[arg(long, default_value_t = false)]
    pub bounds: bool,

    /// Sector apex a >= 0 with W(A) inside Sigma_{theta,a}.
    #[arg(long)]
    pub sector_a: Option<f64>,

    /// Sector half-angle theta in [0, pi/2]; defaults to 0.
    #[arg(long)]
    pub sector_theta: Option<f64>,

    /// Bound parameter epsilon; defaults to a/2 (or 1 when a = 0).
    #[arg(long)]
    pub eps: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "laplacian2d".into(),
            n: 50,
            scale: 1.0,
            eps1: 0.02,
            beta1: -0.02,
            t: 1.0,
            ells: "0,1,2,3".into(),
            method: "trha".into(),
            k: 30,
            q: 5,
            tol: 1e-8,
            gamma: "0.01t".into(),
            max_cycles: 100,
            seed: 0,
            v: "default".into(),
            oracle: "none".into(),
            bounds: false,
            sector_a: None,
            sector_theta: None,
            eps: None,
        }
    }
}

impl RunConfig {
    pub fn parse_ells(&self) -> Result<Vec<usize>, CliError> {
        let mut out = Vec::new();
        for tok in self.ells.split(',') {
            let tok = tok.trim();
            if tok.is_empty() {
                return Err(config_err(format!(
                    "--ells: empty entry in {:?}; expected comma-separated integers",
                    self.ells
                )));
            }
            let ell: usize = tok
                .parse()
                .map_err(|_| config_err(format!("--ells: cannot parse {tok:?} as an integer")))?;
            out.push(ell);
        }
        if out.is_empty() {
            return Err(config_err("--ells: at least one order is required"));
        }
        Ok(out)
    }

    pub fn parse_method(&self) -> Result<Method, CliError> {
        match self.method.as_str() {
            "arnoldi" => Ok(Method::Arnoldi),
            "harmonic" => Ok(Method::Harmonic),
            "si" => Ok(Method::ShiftInvert),
            "tra" => Ok(Method::Tra),
            "trha" => Ok(Method::Trha),
            other => Err(config_err(format!(
                "--method: {other:?} not one of arnoldi|harmonic|si|tra|trha"
            ))),
        }
    }

    /// Absolute gamma: "0.01t" scales with t, anything else parses as f64.
    pub fn parse_gamma(&self) -> Result<Option<f64>, CliError> {
        let g = self.gamma.trim();
        if g == "0.01t" {
            return Ok(None);
        }
        if let Some(stripped) = g.strip_suffix('t') {
            let factor: f64 = stripped
                .parse()
                .map_err(|_| config_err(format!("--gamma: cannot parse {g:?}")))?;
            return Ok(Some(factor * self.t));
        }
        let val: f64 = g
            .parse()
            .map_err(|_| config_err(format!("--gamma: cannot parse {g:?}")))?;
        Ok(Some(val))
    }

    /// Build the operator and its problem-defined starting vector.
    pub fn build_problem(&self) -> Result<(CsrOperator, Vec<f64>), CliError> {
        if let Some(path) = self.problem.strip_prefix("mtx:") {
            let a = load_matrix_market(PathBuf::from(path))
                .map_err(|e| config_err(format!("--problem mtx: {e}")))?;
            let n = a.n();
            return Ok((a, vec![1.0; n]));
        }
        match self.problem.as_str() {
            "laplacian2d" => {
                let a = gen_laplacian2d(self.n, self.scale);
                let v = gen_rhs_poly(self.n);
                Ok((a, v))
            }
            "advdiff2d" => {
                let (a, u0) = gen_advdiff2d(self.n, self.eps1, self.beta1);
                Ok((a, u0))
            }
            "lesp" => {
                let a = gen_lesp(self.n);
                let n = a.n();
                Ok((a, vec![1.0; n]))
            }
            other => Err(config_err(format!(
                "--problem: {other:?} not one of laplacian2d|advdiff2d|lesp|mtx:PATH"
            ))),
        }
    }

    /// Resolve the starting vector choice against the problem default.
    pub fn starting_vector(&self, n: usize, default: Vec<f64>) -> Result<Vec<f64>, CliError> {
        match self.v.as_str() {
            "default" => Ok(default),
            "ones" => Ok(vec![1.0; n]),
            "poly" => {
                let side = (n as f64).sqrt().round() as usize;
                if side * side != n {
                    return Err(config_err("--v poly requires a square-grid problem"));
                }
                Ok(gen_rhs_poly(side))
            }
            "random" => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                Ok((0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            }
            other => Err(config_err(format!(
                "--v: {other:?} not one of default|ones|poly|random"
            ))),
        }
    }

    /// Key identifying the problem instance (for compare compatibility).
    pub fn problem_key(&self) -> String {
        format!(
            "{}|n={}|scale={}|eps1={}|beta1={}|v={}|seed={}",
            self.problem, self.n, self.scale, self.eps1, self.beta1, self.v, self.seed
        )
    }
}
