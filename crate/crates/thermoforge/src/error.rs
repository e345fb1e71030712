//! Crate-wide error type.
//!
//! The CLI maps variant classes onto distinct exit codes, so keep new
//! variants grouped with the class they belong to.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // -- configuration / schema -------------------------------------------
    #[error("config error: {0}")]
    Config(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),

    // -- data shape / domain invariants ------------------------------------
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty grid for `{0}`")]
    EmptyGrid(String),
    #[error("empty mask: no hours selected")]
    EmptyMask,
    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    // -- numeric failures ----------------------------------------------------
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("covariance repair failed: {0}")]
    CovarianceRepair(String),

    // -- pipeline / artifacts -------------------------------------------------
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("calibration did not converge: best cost {best_cost:.4} above ceiling {ceiling:.4}")]
    NotConverged { best_cost: f64, ceiling: f64 },
    #[error("oracle failure: {0}")]
    Oracle(String),

    // -- io -----------------------------------------------------------------
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the CLI for this error class.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            Config(_) | Schema(_) | UnknownChannel(_) => 2,
            MissingArtifact(_) => 3,
            Dimension(_) | InvalidSchedule(_) | InvalidParameter(_) | EmptyGrid(_)
            | EmptyMask | DegenerateSeries(_) => 4,
            NotConverged { .. } => 5,
            NonFinite(_) | Diverged(_) | CovarianceRepair(_) | Oracle(_) => 6,
            Io(_) | Csv(_) | Json(_) => 7,
        }
    }
}
