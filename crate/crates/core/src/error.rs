use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{message} (got {name} = {value})")]
    OutOfBounds {
        name: &'static str,
        message: &'static str,
        value: f64,
    },
    #[error("{name} must be finite (got {value})")]
    NotFinite { name: &'static str, value: f64 },
    #[error("missing required parameter `{0}`")]
    MissingKey(&'static str),
    #[error("unknown parameter `{0}`")]
    UnknownKey(String),
}

impl ParamError {
    pub(crate) fn bound(name: &'static str, message: &'static str, value: f64) -> Self {
        ParamError::OutOfBounds {
            name,
            message,
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("invalid ODE controls: {0}")]
    Controls(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("bracket endpoints eta={lo} ({lo_kind}) and eta={hi} ({hi_kind}) classify on the same side")]
    NoSignChange {
        lo: f64,
        hi: f64,
        lo_kind: &'static str,
        hi_kind: &'static str,
    },
    #[error("accepted trajectory stalled at y={reached:e} before reaching y_min={y_min:e}")]
    Underflow { reached: f64, y_min: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("x={x} is outside the policy domain [{x_floor}, {x_max}]")]
    OutOfRange { x: f64, x_floor: f64, x_max: f64 },
    #[error("habit must be positive (got {0})")]
    NonPositiveHabit(f64),
    #[error("c* and CE do not cross on ({x_floor}, {x_max})")]
    NoCrossing { x_floor: f64, x_max: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}
