use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("no data for state-action pair ({state}, {action})")]
    Coverage { state: usize, action: usize },

    #[error("iteration limit of {0} reached without convergence")]
    IterationLimit(usize),

    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    #[error("system is not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("dynamics are not identifiable: {0}")]
    NotIdentifiable(String),

    #[error("solver reported infeasibility: {0}")]
    Infeasible(String),

    #[error("solver failed to reach tolerance: {0}")]
    Solver(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("verification failed: {}", .0.join("; "))]
    Verification(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// Process exit status: 1 verification failure, 2 bad input, 3 numerical
    /// or solver failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Verification(_) => 1,
            Error::InvalidArgument(_)
            | Error::Shape(_)
            | Error::Coverage { .. }
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::IterationLimit(_)
            | Error::IllPosed(_)
            | Error::NotStabilizable(_)
            | Error::NotIdentifiable(_)
            | Error::Infeasible(_)
            | Error::Solver(_) => 3,
        }
    }

    /// Stable short name used in structured error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Shape(_) => "shape_mismatch",
            Error::Coverage { .. } => "coverage",
            Error::IterationLimit(_) => "iteration_limit",
            Error::IllPosed(_) => "ill_posed",
            Error::NotStabilizable(_) => "not_stabilizable",
            Error::NotIdentifiable(_) => "not_identifiable",
            Error::Infeasible(_) => "infeasible",
            Error::Solver(_) => "solver_failure",
            Error::Parse { .. } => "parse",
            Error::Verification(_) => "verification_failed",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(Error::Verification(vec![]).exit_code(), 1);
        assert_eq!(Error::arg("x").exit_code(), 2);
        assert_eq!(Error::Parse { line: 3, message: "bad".into() }.exit_code(), 2);
        assert_eq!(Error::Solver("stalled".into()).exit_code(), 3);
        assert_eq!(Error::Infeasible("empty".into()).exit_code(), 3);
    }
}
