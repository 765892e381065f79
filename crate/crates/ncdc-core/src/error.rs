use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("composition error: {0}")]
    Composition(String),

    #[error("substitution error: {0}")]
    Substitution(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("capture violation: {0}")]
    Capture(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("extraction error: {0}")]
    Extraction(String),

    #[error("validation failed:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),

    #[error("decode error at {path}: {message}")]
    Decode { path: String, message: String },

    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),
}

impl Error {
    pub fn decode(path: impl Into<String>, message: impl Into<String>) -> Error {
        Error::Decode { path: path.into(), message: message.into() }
    }
}
