use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (defect {0:.3e})")]
    NotHermitian(f64),

    #[error("cavity frequency resonant with transition {from}->{to} (denominator {denominator:.3e})")]
    Resonance { from: usize, to: usize, denominator: f64 },

    #[error("Matsubara frequency {matsubara:.6} collides with cut-off {gamma:.6}")]
    Pole { matsubara: f64, gamma: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("hierarchy too large: {count} auxiliary operators (limit {limit})")]
    IndexOverflow { count: u128, limit: usize },

    #[error("all {requested} trajectories diverged")]
    AllDiverged { requested: usize },

    #[error("record too short: {len} samples (need at least {min})")]
    TooShort { len: usize, min: usize },

    #[error("{path}: {msg}")]
    Config { path: String, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite, got {value}")))
    }
}
