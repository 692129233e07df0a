use thiserror::Error;

/// Errors raised by the particle-field engine and its tooling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("positivity violated in field `{field}` at step {step}: min {min:e} below tolerance (max {max:e})")]
    Positivity { field: &'static str, step: usize, min: f64, max: f64 },

    #[error("non-finite value in `{what}` at step {step}")]
    NonFinite { what: &'static str, step: usize },

    #[error("degenerate initial data: {0}")]
    DegenerateInitial(String),

    #[error("CFL violation: dt = {dt:e} exceeds stable limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("resampling requires positive total mass")]
    ZeroMass,

    #[error("expression error at column {col}: {msg}")]
    Expr { col: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
