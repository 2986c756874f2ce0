//! Matrix-orthogonalized momentum optimizers with variance reduction.
//!
//! Layers, bottom up: [`linalg`] (dense matrices, SVD, polar factor,
//! Newton–Schulz), [`problems`] (synthetic objectives with stochastic
//! gradients), [`optimizer`] (the Muon family), [`verification`]
//! (inequality audits and rate fits) and [`harness`] (configs, runs, files).

pub mod harness;
pub mod linalg;
pub mod optimizer;
pub mod problems;
pub mod verification;

use thiserror::Error;

pub use harness::{ExperimentConfig, HarnessError, RunManifest};
pub use linalg::{LinalgError, Matrix};
pub use optimizer::{Muon, MuonConfig, MuonOption, OptimizerError, Orthogonalizer, Schedule, StepRecord};
pub use problems::{Problem, ProblemConstants, ProblemError};
pub use verification::{CheckReport, RateFit, Trace, VerificationError};

/// Any error the library can return.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Verification(#[from] VerificationError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
