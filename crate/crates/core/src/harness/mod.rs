//! Command-line front end pieces: configuration, benchmarks, run
//! orchestration, result files and the validation matrix.

pub mod benchmarks;
pub mod config;
pub mod run;
pub mod validate;

pub use benchmarks::{BenchmarkProblem, Reference};
pub use config::{MixtureSource, ResolvedConfig, RunConfig};
pub use run::{execute_benchmark, execute_run, run_benchmark_file, run_file, BenchmarkOutcome, RunOutcome};
pub use validate::{validate, ValidateOptions, ValidationReport};

use crate::error::Error;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("output error: {0}")]
    Output(String),
    #[error("numerical error: {0}")]
    Numerical(#[from] Error),
}

impl HarnessError {
    /// 2 for config and output problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Output(_) => 2,
            HarnessError::Numerical(_) => 3,
        }
    }
}

/// Shortest round-trip decimal, switching to exponent form outside
/// `[1e-4, 1e15)`.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}
