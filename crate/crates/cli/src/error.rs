use metric_sir::SolverError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("coupling hypotheses violated:\n  {}", .0.join("\n  "))]
    Hypotheses(Vec<String>),
    #[error("time step {dt} is not below the stability bound {bound}; set scheme.allow_unstable_dt to run anyway")]
    Stability { dt: f64, bound: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("sweep point {index} (value {value}): {source}")]
    Sweep { index: usize, value: f64, source: Box<CliError> },
}

impl CliError {
    /// 1 for configuration problems, 2 for a time step above the stability
    /// bound, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Stability { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Sweep { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::UnstableDt { dt, bound } => CliError::Stability { dt, bound },
            SolverError::SingularSystem | SolverError::NonFiniteState { .. } => CliError::Numerical(e.to_string()),
            SolverError::Model(m) => CliError::Model(m.to_string()),
            other => CliError::Validation(vec![other.to_string()]),
        }
    }
}
