use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Operands were expressed in incompatible bases.
    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    /// A trajectory came within the node floor of the density.
    #[error("node encountered at t = {t}: density {density:e} below floor")]
    Node { t: f64, density: f64 },

    /// A measurement device was used out of order.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A run exceeded one of its runtime budgets (e.g. node dropouts).
    #[error("runtime budget exceeded: {0}")]
    Budget(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
