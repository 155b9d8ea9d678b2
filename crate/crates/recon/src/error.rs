use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReconError {
    #[error("extent mismatch: {0}")]
    ExtentMismatch(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("optics: {0}")]
    Optics(#[from] vsci_optics::OpticsError),
    #[error("network: {0}")]
    Net(#[from] vsci_net::NetError),
}

pub type Result<T> = std::result::Result<T, ReconError>;
