use thiserror::Error;

/// Errors produced by the numerical routines and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge for {context} (estimate {estimate:e}, error {error:e})")]
    Quadrature {
        context: String,
        estimate: f64,
        error: f64,
    },

    #[error("eps = {eps} is not resolved by the lattice; need at least N = {required_n} points per axis (or dt <= {required_dt:e})")]
    UnderResolved {
        eps: f64,
        required_n: usize,
        required_dt: f64,
    },

    #[error("finite-difference step {step:e} underflows at level n = {level}")]
    StepUnderflow { step: f64, level: u32 },

    #[error("blow-up at step {step} (t = {time}): sup-norm {sup_norm:e}")]
    BlowUp {
        step: usize,
        time: f64,
        sup_norm: f64,
    },

    #[error("Picard iteration is not contracting: residuals {residuals:?}")]
    NonContraction { residuals: Vec<f64> },

    #[error("missing config key `{0}`")]
    MissingKey(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) | Error::MissingKey(_) | Error::Config(_) => 1,
            Error::UnderResolved { .. } => 1,
            Error::BlowUp { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
