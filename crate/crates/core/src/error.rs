use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("Newton iteration failed at t = {t}: residual {residual:e} after {iterations} iterations")]
    NewtonFailure {
        t: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("index condition violated: {0}")]
    IndexCondition(String),

    #[error("tangential crossing at t = {t}: transversality denominator {denominator:e}")]
    TangentialCrossing { t: f64, denominator: f64 },

    #[error("integration diverged: {0}")]
    Divergence(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("finite-difference oracle invalid for parameter {index}: transition count changed ({minus} vs {plus})")]
    OracleInvalid {
        index: usize,
        minus: usize,
        plus: usize,
    },

    #[error("QP subproblem failed: {0}")]
    Qp(String),

    #[error("data format error: {0}")]
    Format(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
