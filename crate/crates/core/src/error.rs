use std::path::PathBuf;

/// Errors surfaced by the simulator, schedulers and region solver.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no completed codes yet: {0}")]
    EmptyHistory(&'static str),

    #[error(
        "CSI alphabet has {states} states, above the exact-LP cap of {cap}; \
         use the empirical boundary search instead"
    )]
    AlphabetTooLarge { states: u128, cap: usize },

    #[error("absorbing-chain state space has {states} states, above the cap of {cap}")]
    StateSpaceOverflow { states: u128, cap: usize },

    #[error("queue trace has {len} samples, need at least {min}")]
    TraceTooShort { len: usize, min: usize },

    #[error("LP solver failed: {0}")]
    Solver(String),

    #[error("invariant violated at slot {slot}: {detail}")]
    Invariant { slot: u64, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
