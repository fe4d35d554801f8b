use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("root isolation broke down: {found} roots found, at most {bound} possible")]
    RootOverflow { found: usize, bound: usize },

    #[error("hypothesis H1 violated: {0}")]
    H1Violated(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("tangent vector has zero length")]
    ZeroTangent,

    #[error("state lies on the excluded set: {0}")]
    Excluded(String),

    #[error("numerical integrity failure: {0}")]
    NumericalIntegrity(String),

    #[error("steering failed: {0}")]
    Steering(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
