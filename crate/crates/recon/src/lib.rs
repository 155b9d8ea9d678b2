//! Decoders and quality metrics: the GAP-TV baseline, PSNR/SSIM, and the
//! checkpoint-driven network decode.

pub mod decode;
mod error;
pub mod gap_tv;
pub mod metrics;

pub use decode::{decode, decode_from_path};
pub use error::{ReconError, Result};
pub use gap_tv::{gap_tv_decode, gap_tv_decode_traced, GapTvConfig, GapTvTrace};
pub use metrics::{psnr, ssim, ssim_with, MetricsResult, PSNR_CAP};
