use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} {value} out of range (limit {limit})")]
    Range { what: &'static str, value: u64, limit: u64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("key budget exhausted: needed {needed} bits, {available} available")]
    BudgetExhausted { needed: u64, available: u64 },

    #[error("one-time-pad violation: {0}")]
    KeyReuse(String),

    #[error("framing error: {0}")]
    Framing(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("link blocked by monitor: {0}")]
    LinkBlocked(String),

    #[error("entropy source failure: {0}")]
    Entropy(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::BudgetExhausted { .. } => 4,
            Error::Io { .. } => 5,
            Error::Range { .. }
            | Error::Validation(_)
            | Error::Domain(_)
            | Error::KeyReuse(_)
            | Error::Framing(_)
            | Error::Protocol(_)
            | Error::LinkBlocked(_)
            | Error::Entropy(_) => 3,
        }
    }

    /// Short machine-readable tag, printed by the CLI on failure.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Range { .. } => "range",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Validation(_) => "validation",
            Error::Domain(_) => "domain",
            Error::BudgetExhausted { .. } => "budget_exhausted",
            Error::KeyReuse(_) => "key_reuse",
            Error::Framing(_) => "framing",
            Error::Protocol(_) => "protocol",
            Error::LinkBlocked(_) => "link_blocked",
            Error::Entropy(_) => "entropy",
        }
    }
}
