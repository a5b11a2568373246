use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    #[error("invalid cell geometry: {0}")]
    Geometry(String),

    #[error("voxel image format: {0}")]
    Format(String),

    #[error("singular cell system: {0}")]
    SingularSystem(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverNonConvergence { iterations: usize, residual: f64 },

    #[error("correctors are stale: expected fingerprint {expected}, found {found}")]
    Stale { expected: String, found: String },

    #[error("configuration: {0}")]
    Config(String),

    #[error("plate clamp does not fix the rigid motions: {0}")]
    ClampInsufficient(String),

    #[error("Newton iteration failed: {0}")]
    NewtonFailure(String),

    #[error("sample point ({0}, {1}) lies outside the plate domain")]
    Domain(f64, f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
