use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("capability error: {0}")]
    Capability(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("structural error: {0}")]
    Structure(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("rank deficient design: {0}")]
    Rank(String),
    #[error("complete separation: {0}")]
    Separation(String),
}

impl Error {
    /// Stable machine-readable tag, used in error JSON by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Domain(_) => "domain",
            Error::Capability(_) => "capability",
            Error::Config(_) => "config",
            Error::Training(_) => "training",
            Error::Structure(_) => "structure",
            Error::Validation(_) => "validation",
            Error::Rank(_) => "rank",
            Error::Separation(_) => "separation",
        }
    }
}

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
