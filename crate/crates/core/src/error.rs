use std::fmt;

/// Errors surfaced by feeder loading, power-flow solves, identifiability
/// tests, and load recovery.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Input file or JSON payload could not be parsed.
    Parse(String),
    /// Feeder graph violated a structural invariant.
    InvalidFeeder(String),
    /// Metered/non-metered sets overlap.
    PartitionOverlap { bus: usize },
    /// The substation must belong to the metered set.
    SubstationNotMetered,
    /// Metered and non-metered sets do not cover all buses exactly once.
    PartitionCoverage(String),
    /// Probing plan failed validation.
    InvalidPlan(String),
    /// Voltage angle is undefined at a bus with v = 0.
    ZeroVoltageBus { bus: usize },
    /// Newton power flow did not converge.
    PowerFlowDiverged { iterations: usize, residual: f64 },
    /// Gauss-Newton recovery did not converge.
    RecoveryDiverged { iterations: usize, residual: f64 },
    /// Recovery Jacobian lost column rank at an iterate.
    RankDeficient { iteration: usize, singular_ratio: f64 },
    /// ZIP regressor is singular or too badly conditioned to fit.
    IllPosedZipFit { determinant: Option<f64>, condition: f64 },
    /// Caller violated an operation precondition.
    InvalidInput(String),
    /// Internal consistency check failed (indicates a bug).
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
            Error::InvalidFeeder(msg) => write!(f, "invalid feeder: {msg}"),
            Error::PartitionOverlap { bus } => {
                write!(f, "bus {bus} appears in both metered and non-metered sets")
            }
            Error::SubstationNotMetered => {
                write!(f, "substation (bus 0) must be in the metered set")
            }
            Error::PartitionCoverage(msg) => write!(f, "partition does not cover buses: {msg}"),
            Error::InvalidPlan(msg) => write!(f, "invalid probing plan: {msg}"),
            Error::ZeroVoltageBus { bus } => {
                write!(f, "voltage angle undefined: bus {bus} has zero voltage")
            }
            Error::PowerFlowDiverged {
                iterations,
                residual,
            } => write!(
                f,
                "power flow did not converge after {iterations} iterations (residual {residual:.3e})"
            ),
            Error::RecoveryDiverged {
                iterations,
                residual,
            } => write!(
                f,
                "recovery did not converge after {iterations} iterations (residual {residual:.3e})"
            ),
            Error::RankDeficient {
                iteration,
                singular_ratio,
            } => write!(
                f,
                "rank-deficient Jacobian at iteration {iteration} (singular ratio {singular_ratio:.3e})"
            ),
            Error::IllPosedZipFit {
                determinant,
                condition,
            } => match determinant {
                Some(d) => write!(
                    f,
                    "ill-posed ZIP fit: |det| = {:.3e}, condition = {condition:.3e}",
                    d.abs()
                ),
                None => write!(f, "ill-posed ZIP fit: condition = {condition:.3e}"),
            },
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Internal(msg) => write!(f, "internal error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Parse(err.to_string())
    }
}
