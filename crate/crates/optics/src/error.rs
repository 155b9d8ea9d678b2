use thiserror::Error;

#[derive(Debug, Error)]
pub enum OpticsError {
    #[error("degenerate extents: {0}")]
    DegenerateExtents(String),
    #[error("density must lie in (0,1), got {0}")]
    BadDensity(f64),
    #[error("extent mismatch: {detail}")]
    ExtentMismatch { detail: String },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("operation requires {required}, but masks are {actual}")]
    WrongMaskKind {
        required: &'static str,
        actual: String,
    },
    #[error("blur kernel ({kernel} px) exceeds mask plane ({h}x{w})")]
    KernelTooLarge { kernel: usize, h: usize, w: usize },
    #[error("mask metadata disagrees with payload: {0}")]
    MetadataMismatch(String),
    #[error("bad mask metadata: {0}")]
    BadMetadata(String),
    #[error("container: {0}")]
    Container(#[from] vsci_tensor::stns::StnsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("png: {0}")]
    Png(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, OpticsError>;
