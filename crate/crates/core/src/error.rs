use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid law: {0}")]
    InvalidLaw(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("reachable states exceed cap: {states} > {cap}")]
    StateCap { states: usize, cap: usize },

    #[error("oracle guard violated: {0}")]
    OracleGuard(String),

    #[error("explicit scheme unstable: dt*sigma_hi2/dx^2 = {ratio} > 0.5")]
    Unstable { ratio: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("functional is neither convex nor concave on [{lo}, {hi}]")]
    NotConvexOrConcave { lo: f64, hi: f64 },

    #[error("model dependence width {actual} exceeds allowed {allowed}")]
    DependenceWidth { allowed: usize, actual: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 1 for input/validation problems, 2 for failures
    /// during computation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidLaw(_) | Error::InvalidArgument(_) | Error::Config(_) => 1,
            _ => 2,
        }
    }
}
