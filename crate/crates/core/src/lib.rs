//! Evaluation of the phi-functions of a large sparse matrix acting on a
//! vector, y(t) = phi_l(-tA) v for several orders l at once, via Krylov
//! subspace methods: single-cycle Arnoldi, shift-and-invert and harmonic
//! Arnoldi approximations, plus thick-restarted drivers with residual-based
//! stopping, restart correction ODEs and computable a-posteriori error
//! bounds.
//!
//! The crate is organized around the solve pipeline:
//!
//! * [`dense`] and [`eig`]: kernels for the small projected problems
//!   (LU, matrix exponential, phi-functions, a Hessenberg eigensolver);
//! * [`sparse`], [`market`], [`problems`], [`shifted`]: the sparse operator
//!   abstraction, Matrix Market I/O, test-problem generators, shifted solves;
//! * [`arnoldi`], [`projection`]: the Arnoldi process, thick-restart
//!   compression, projected matrices and per-order approximations;
//! * [`correction`]: the stacked restart-correction ODEs;
//! * [`driver`]: the single-cycle and thick-restarted solvers;
//! * [`bounds`]: error-bound diagnostics.
//!
//! The `parallel` feature (on by default) runs the data-parallel inner loops
//! (CSR matvec rows, per-order correction solves) on rayon; without it the
//! same code paths execute sequentially.

#![allow(clippy::needless_range_loop)]

pub mod arnoldi;
pub mod bounds;
pub mod correction;
pub mod dense;
pub mod driver;
pub mod eig;
pub mod error;
pub mod market;
pub mod par;
pub mod problems;
pub mod projection;
pub mod shifted;
pub mod sparse;

pub use driver::{Method, MethodReport, PhiRequest, RunOutcome};
pub use error::{Error, Result};
pub use sparse::{CsrOperator, LinearOp};
