//! Supervised network centrality estimation.
//!
//! A network A is modeled as a noisy rank-one matrix d u v^T whose leading
//! singular vectors u (hub) and v (authority) also drive a response through
//! y = X beta_x + u beta_u + v beta_v + eps. The crate implements
//!
//! * the naive two-stage baseline (SVD, then OLS on the estimated
//!   centralities) in [`two_stage`],
//! * the joint solver that lets the regression supervise the centrality
//!   estimation in [`solver`], with oracle / plug-in / cross-validated
//!   tuning of the coupling weight lambda,
//! * out-of-sample centrality estimation and response prediction in
//!   [`predict`],
//! * closed-form asymptotic standard errors and confidence intervals for
//!   the coefficients, the centralities, and every entry of the denoised
//!   network in [`inference`],
//! * a deterministic Monte Carlo harness for loss, bias, and coverage
//!   panels in [`sim`], and
//! * the file formats used by the CLI in [`io`].

pub mod error;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod model;
pub mod predict;
pub mod sim;
pub mod solver;
pub mod two_stage;

pub use error::{Error, Result};
pub use model::{Dataset, SimulationConfig, UnifiedModelParams};
pub use solver::{SolverSettings, SolverOutcome};
pub use two_stage::{FitResult, Method};
