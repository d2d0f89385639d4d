use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("invalid parameters: {0}")]
    InvalidParams(ParamsViolation),
    #[error("{routine} exceeded its iteration cap ({iterations} > {cap}); {detail}")]
    CapExceeded {
        routine: &'static str,
        iterations: u64,
        cap: u64,
        detail: String,
    },
    #[error("contract violation: {0}")]
    ContractViolation(String),
}

/// Which parameter invariant of the online algorithm failed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamsViolation {
    /// `eta >= max(12 K G R, 2 K / alpha)` failed.
    EtaTooSmall { eta: f64, required: f64 },
    /// `eps_init >= (K G)^2` failed.
    EpsInitTooSmall { eps_init: f64, required: f64 },
    /// `3 eps / eps_init <= 4 R^2` failed.
    EpsRatioTooLarge { ratio: f64, limit: f64 },
    /// `1 <= K <= T` failed.
    BlockLenOutOfRange { block_len: usize, horizon: usize },
    /// A parameter was not a positive finite number.
    NonPositive { name: &'static str, value: f64 },
}

impl ParamsViolation {
    pub fn name(&self) -> &'static str {
        match self {
            Self::EtaTooSmall { .. } => "eta >= max(12KGR, 2K/alpha)",
            Self::EpsInitTooSmall { .. } => "eps_init >= (K*G)^2",
            Self::EpsRatioTooLarge { .. } => "3*eps/eps_init <= 4R^2",
            Self::BlockLenOutOfRange { .. } => "1 <= K <= T",
            Self::NonPositive { .. } => "positive parameters",
        }
    }
}

impl fmt::Display for ParamsViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::EtaTooSmall { eta, required } => {
                write!(f, "{} violated: eta = {eta}, required {required}", self.name())
            }
            Self::EpsInitTooSmall { eps_init, required } => write!(
                f,
                "{} violated: eps_init = {eps_init}, required {required}",
                self.name()
            ),
            Self::EpsRatioTooLarge { ratio, limit } => {
                write!(f, "{} violated: ratio = {ratio}, limit {limit}", self.name())
            }
            Self::BlockLenOutOfRange { block_len, horizon } => write!(
                f,
                "{} violated: K = {block_len}, T = {horizon}",
                self.name()
            ),
            Self::NonPositive { name, value } => {
                write!(f, "{name} must be positive and finite, got {value}")
            }
        }
    }
}

pub(crate) fn check_len(expected: usize, v: &[f64]) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: v.len(),
        });
    }
    Ok(())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
