//! Error type shared across the solver.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid energy model: {0}")]
    InvalidEnergy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {what}{}", location_suffix(.location))]
    NonFinite {
        what: String,
        location: Option<(usize, usize)>,
    },

    /// Raised when a time step produces non-finite data; the run loop maps
    /// this to a `Halted(NonFinite)` outcome rather than a hard failure.
    #[error("instability at t = {t} (step {step}): {reason}")]
    Instability { t: f64, step: u64, reason: String },

    #[error("imaginary residue {residue:.3e} exceeds tolerance {tol:.3e} in {what}")]
    ImagResidue {
        what: String,
        residue: f64,
        tol: f64,
    },

    #[error("operation {op} does not support kernel `{kernel}`")]
    UnsupportedKernel { op: &'static str, kernel: String },

    #[error(
        "floor policy skipped {fraction:.3e} of spectral energy (limit {limit:.1e}) applying power {power}"
    )]
    FloorEscalation {
        fraction: f64,
        limit: f64,
        power: f64,
    },

    #[error("problem size {n} exceeds oracle cap {cap}")]
    OracleSizeCap { n: usize, cap: usize },

    #[error("Picard iteration diverged; residual history: {0:?}")]
    PicardDivergence(Vec<f64>),

    #[error("scenario invalid:\n{}", .0.join("\n"))]
    ScenarioInvalid(Vec<String>),

    #[error("observer failed at t = {t}: {reason}")]
    Observer { t: f64, reason: String },

    #[error("strict mode: {0}")]
    StrictMode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn location_suffix(loc: &Option<(usize, usize)>) -> String {
    match loc {
        Some((i, j)) => format!(" at grid point ({i}, {j})"),
        None => String::new(),
    }
}

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
