use thiserror::Error;

/// Errors raised by the contest toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContestError {
    #[error("invalid specification: {0}")]
    Validation(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("distribution has infinite mean")]
    InfiniteMean,

    #[error("threshold is not unique: combined CDF is flat at the target level on [{lo}, {hi}]")]
    NonUniqueThreshold { lo: f64, hi: f64 },

    #[error("n = {n} is below the minimum population n_t = {n_t}")]
    PopulationTooSmall { n: u64, n_t: u64 },

    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("target tau = {tau} is infeasible; max achievable r_R = {max_r_r}")]
    Infeasible { tau: f64, max_r_r: f64 },

    #[error("calibrated rho = {rho} lies outside (0, 1]")]
    CalibrationOutOfRange { rho: f64 },

    #[error("root finding failed: {0}")]
    NoConvergence(String),
}

impl ContestError {
    /// Stable machine-readable name, used in CLI error records and FFI codes.
    pub fn name(&self) -> &'static str {
        match self {
            ContestError::Validation(_) => "validation_error",
            ContestError::Domain(_) => "domain_error",
            ContestError::InfiniteMean => "infinite_mean",
            ContestError::NonUniqueThreshold { .. } => "non_unique_threshold",
            ContestError::PopulationTooSmall { .. } => "population_too_small",
            ContestError::DegenerateMetric(_) => "degenerate_metric",
            ContestError::Unsupported(_) => "unsupported_configuration",
            ContestError::Infeasible { .. } => "infeasible",
            ContestError::CalibrationOutOfRange { .. } => "calibration_out_of_range",
            ContestError::NoConvergence(_) => "no_convergence",
        }
    }
}

pub type Result<T> = std::result::Result<T, ContestError>;
