use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum HorstError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("grid too coarse: {ppw:.3} points per wavelength at cell {cell:?}, at least {required} required")]
    PpwViolation {
        ppw: f64,
        required: f64,
        cell: [usize; 3],
    },

    #[error("singular pivot in front {front}: {detail}")]
    SingularPivot { front: usize, detail: String },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl HorstError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        HorstError::InvalidInput(msg.into())
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        HorstError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn format(offset: u64, message: impl Into<String>) -> Self {
        HorstError::Format {
            offset,
            message: message.into(),
        }
    }

    /// Process exit code: 2 configuration, 3 numeric, 4 i/o or format.
    pub fn exit_code(&self) -> i32 {
        match self {
            HorstError::InvalidInput(_) | HorstError::Config { .. } => 2,
            HorstError::PpwViolation { .. }
            | HorstError::SingularPivot { .. }
            | HorstError::Numeric(_) => 3,
            HorstError::Format { .. } | HorstError::Io(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, HorstError>;
