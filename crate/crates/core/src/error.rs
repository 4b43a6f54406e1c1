use thiserror::Error;

/// Errors raised by model construction, analysis and simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter or control input violates its declared range.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The operating point is degenerate (e.g. a duty ratio at its bound).
    #[error("singular configuration: {0}")]
    Singular(String),

    /// No equilibrium or duty ratio satisfies the request.
    #[error("infeasible operating point: {0}")]
    Infeasible(String),

    /// The plant has zero DC gain, so loop polarity is undefined.
    #[error("loop polarity undefined: plant DC gain is {0}")]
    PolarityUndefined(f64),

    /// A tuning target cannot be met with nonnegative gains.
    #[error("tuning target infeasible: {0}")]
    TuneInfeasible(String),

    /// Crossover tuning would need zero integral action.
    #[error("crossover target already met by kp alone (ki = 0)")]
    ZeroIntegralGain,

    /// An iterative numerical routine did not converge.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} is not finite ({value})")))
    }
}
