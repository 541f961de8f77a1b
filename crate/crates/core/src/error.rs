use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input; `path` names the offending field or id.
    #[error("invalid {path}: {reason}")]
    Validation { path: String, reason: String },

    #[error(
        "{shared_blocks} shared blocks give 2^{shared_blocks} combinations, above the cap of {cap}; \
         use the greedy solver for libraries with many shared blocks"
    )]
    CombinationCap { shared_blocks: usize, cap: u64 },

    #[error("knapsack table needs {cells} cells, above the cap of {cap}; use a larger epsilon")]
    DpCapacity { cells: u64, cap: u64 },

    #[error("exhaustive search aborted after visiting {visited} placements: {reason}")]
    OracleBudget { visited: u64, reason: String },

    #[error("user at distance {distance} m is outside the {radius} m coverage radius")]
    OutOfCoverage { distance: f64, radius: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn validation(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
