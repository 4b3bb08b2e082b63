use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A non-finite or out-of-range input reached a pure formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// The grid Thevenin voltage is zero, so voltage ratios are undefined.
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The grid cannot carry the reference power at any angle.
    #[error("no equilibrium: {0}")]
    NoEquilibrium(String),

    #[error("integration failed at t = {time:.6} s: {reason}")]
    Integration { time: f64, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Every switch-step branch of the horizon program was infeasible.
    #[error("mpc infeasible: {0}")]
    Infeasible(String),

    /// The horizon program starts beyond the zero-crossing angle.
    #[error("initial state is unsafe: theta = {theta:.6} rad exceeds {theta_zc:.6} rad")]
    UnsafeStart { theta: f64, theta_zc: f64 },

    #[error("indeterminate trajectory: {0}")]
    Indeterminate(String),

    /// Analysis preconditions failed (e.g. unstable at zero fault duration).
    #[error("degenerate analysis: {0}")]
    Degenerate(String),

    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} is not finite ({value})")))
    }
}
