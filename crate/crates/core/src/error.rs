use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Inputs violate a documented precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("time {t} lies outside [{t0}, {theta}]")]
    OutsideHorizon { t: f64, t0: f64, theta: f64 },

    #[error("state {x:?} escaped the bounding box at t = {t}")]
    StateEscape { t: f64, x: Vec<f64> },

    #[error("non-finite derivative at t = {t}, x = {x:?}")]
    NonFinite { t: f64, x: Vec<f64> },

    #[error("trajectory has no sample at t = {t}")]
    MissingSample { t: f64 },

    #[error("disturbance set enumeration is empty")]
    EmptyEnumeration,

    #[error("point {x:?} lies outside the value table box")]
    OutsideTable { x: Vec<f64> },

    #[error("value grid too coarse: Euler step from {x:?} leaves the box by more than one cell")]
    GridTooCoarse { x: Vec<f64> },

    #[error("target oracle: {0}")]
    Oracle(String),
}

impl Error {
    /// Numerical failures (as opposed to rejected inputs).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StateEscape { .. }
                | Error::NonFinite { .. }
                | Error::GridTooCoarse { .. }
                | Error::OutsideTable { .. }
        )
    }
}
