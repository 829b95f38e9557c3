use std::path::PathBuf;

use thiserror::Error;

/// A (region, slot, type) coordinate reported in numeric errors. Indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub region: Option<usize>,
    pub slot: Option<usize>,
    pub crime_type: Option<usize>,
}

impl Block {
    pub fn new(region: Option<usize>, slot: Option<usize>, crime_type: Option<usize>) -> Self {
        Self { region: region.map(|n| n + 1), slot: slot.map(|t| t + 1), crime_type: crime_type.map(|k| k + 1) }
    }
}

impl std::fmt::Display for Block {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let show = |v: Option<usize>| v.map_or_else(|| "*".to_string(), |v| v.to_string());
        write!(f, "(n={}, t={}, k={})", show(self.region), show(self.slot), show(self.crime_type))
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("regions {0} and {1} share a centroid and the distance floor is zero")]
    Singularity(usize, usize),

    #[error("{}{}: {message}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Load { path: PathBuf, line: Option<usize>, message: String },

    #[error("index out of range: {0}")]
    Bounds(String),

    #[error("numeric failure in block {block}: {message}")]
    Numeric { block: Block, message: String },

    #[error("objective diverged ({objective:.6e} > 1e3 x initial {initial:.6e}); try a smaller learning rate")]
    Divergence { objective: f64, initial: f64 },

    #[error("insufficient history: need more than {window} slots, have {available}")]
    InsufficientHistory { window: usize, available: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub(crate) fn load(path: impl Into<PathBuf>, line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Load { path: path.into(), line, message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for failures caused by the numbers rather than by the inputs or configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric { .. } | Error::Divergence { .. } | Error::Singularity(..))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
