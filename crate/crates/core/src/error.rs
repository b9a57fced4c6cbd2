use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node count {n} outside supported range {min}..={max}")]
    Range { n: usize, min: usize, max: usize },

    #[error("invalid graph structure: {0}")]
    Structure(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("integration diverged at step {step} (t = {time} s)")]
    Divergence { step: usize, time: f64 },

    #[error("search space of {size} candidates exceeds the cap of {cap}")]
    SearchSpace { size: f64, cap: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("no trained model for groups of {0} nodes")]
    MissingModel(usize),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
