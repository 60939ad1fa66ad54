use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// Probability mass beyond the Fock cutoff exceeds the configured tolerance.
    #[error(
        "truncation error: tail mass {tail:.3e} exceeds tolerance {tolerance:.3e}; try cutoff >= {required_cutoff}"
    )]
    Truncation {
        tail: f64,
        tolerance: f64,
        required_cutoff: usize,
    },

    #[error("degenerate Bayes update: outcome {0} has zero likelihood on the whole grid")]
    DegenerateUpdate(String),

    #[error("degenerate chain: current state {0} has zero probability")]
    DegenerateChain(String),

    /// Intensity carries no first-order information when n_a == n_th.
    #[error("singular estimator: {0}")]
    SingularEstimator(String),

    #[error("pole: {0}")]
    Pole(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn check_probability(name: &str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(invalid(format!("{name} = {value} outside [0, 1]")));
    }
    Ok(())
}

pub(crate) fn check_non_negative(name: &str, value: f64) -> Result<()> {
    if !(value >= 0.0) || !value.is_finite() {
        return Err(invalid(format!("{name} = {value} must be finite and >= 0")));
    }
    Ok(())
}
