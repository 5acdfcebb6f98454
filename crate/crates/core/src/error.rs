use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("inadmissible deformation: sup|delta| = {sup} must stay below kappa = {kappa}")]
    InadmissibleGeometry { sup: f64, kappa: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("profile has nonzero mean {mean:e}; no periodic antiderivative exists")]
    NonzeroMean { mean: f64 },

    #[error("requested {requested} {family} modes but only {available} are configured")]
    BasisTooLarge {
        family: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("basis size n = {0} must be a positive even number")]
    OddBasisSize(usize),

    #[error("epsilon = {epsilon} is not aligned with the time grid (dt = {dt})")]
    NotGridAligned { epsilon: f64, dt: f64 },

    #[error("inner solve at t = {t} did not converge after {iterations} iterations (residual {residual:e})")]
    InnerSolve {
        t: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("mass matrix is singular at t = {t}")]
    SingularMass { t: f64 },

    #[error("energy {energy:e} exceeded the ceiling {ceiling:e} at t = {t}")]
    EnergyBlowUp { t: f64, energy: f64, ceiling: f64 },

    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
