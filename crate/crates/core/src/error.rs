use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("channel error: {0}")]
    Channel(String),

    #[error("no detection: {0}")]
    NoDetection(String),

    #[error("synchronization failed: {0}")]
    SyncFailure(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("infeasible spoof: {0}")]
    InfeasibleSpoof(String),
}

pub type Result<T> = std::result::Result<T, Error>;
