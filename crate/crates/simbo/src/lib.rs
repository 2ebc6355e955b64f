//! Self-identifying internal-model-based online optimization.
//!
//! The library tracks the minimizer trajectory of a time-varying quadratic
//! problem using only gradient evaluations. It identifies the annihilating
//! polynomial of the driving signal with recursive least squares while
//! running online gradient descent, then switches to an internal-model
//! controller synthesized from the identified polynomial and verified to be
//! Schur-stable over the Hessian eigenvalue interval. Supervisory triggers
//! handle controller refinement and re-identification after model changes.
//!
//! Modules:
//! - [`problems`]: quadratic and time-varying-Hessian test problems, driving
//!   signals with known internal models, minimizer/gradient oracles.
//! - [`ogd`]: online gradient descent baseline and its contraction factor.
//! - [`rls`]: recursive least squares with forgetting, regressors for the
//!   decision recurrence, persistency-of-excitation diagnostics.
//! - [`imc`]: companion realization, verified feedback synthesis, and the
//!   control-based decision update.
//! - [`supervisor`]: the two-phase state machine tying the above together.
//! - [`harness`]: experiment configs, paired algorithm runs, CSV traces, and
//!   the named presets of the benchmark suite.

pub mod error;
pub mod harness;
pub mod imc;
pub mod ogd;
pub mod poly;
pub mod problems;
pub mod rls;
pub mod supervisor;

pub use error::{Error, Result};
pub use harness::{
    asymptotic_error, asymptotic_errors, emit, preset, run_experiment, suite, Algorithm,
    EmitFormat, ExperimentConfig, TraceRecord,
};
pub use imc::{companion, synthesize, verify_margin, warm_start, Controller, Realization,
    SynthesisConfig, TargetPattern};
pub use ogd::{contraction_factor, ogd_step, OgdConfig};
pub use problems::{
    InternalModel, OnlineProblem, QuadraticProblem, SignalKind, TvHessianProblem,
};
pub use rls::{identification_residual, pe_order, regressor, Residual, RlsState};
pub use supervisor::{
    check_model_change, check_phase1_exit, check_recompute, Phase, Supervisor, SupervisorConfig,
    SupervisorEvent,
};
