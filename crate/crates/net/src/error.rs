use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("tensor: {0}")]
    Tensor(#[from] vsci_tensor::TensorError),
    #[error("optics: {0}")]
    Optics(#[from] vsci_optics::OpticsError),
    #[error("container: {0}")]
    Container(#[from] vsci_tensor::stns::StnsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NetError>;
