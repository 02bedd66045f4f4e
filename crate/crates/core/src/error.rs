use thiserror::Error;

#[derive(Debug, Error)]
pub enum HiftError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The ground truth produced no positive location on the score map.
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HiftError>;

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::HiftError::Shape(format!($($arg)*))
    };
}

macro_rules! ensure_shape {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err($crate::error::HiftError::Shape(format!($($arg)*)));
        }
    };
}

pub(crate) use ensure_shape;
pub(crate) use shape_err;
