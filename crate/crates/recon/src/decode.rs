//! Learned-decode entry point: checkpoint in, clipped frames out.

use std::path::Path;

use vsci_net::checkpoint::{self, Checkpoint};
use vsci_optics::{MaskSet, Measurement, VideoCube};

use crate::error::{ReconError, Result};

/// Runs the network from a loaded checkpoint and clips the frames to [0,1].
/// Extent mismatches are rejected before any compute.
pub fn decode(y: &Measurement, masks: &MaskSet, ck: &Checkpoint<f32>) -> Result<VideoCube> {
    let cfg = &ck.net.config;
    if masks.t != cfg.t || masks.h != cfg.h || masks.w != cfg.w {
        return Err(ReconError::ExtentMismatch(format!(
            "checkpoint built for {}x{}x{}, masks are {}x{}x{}",
            cfg.t, cfg.h, cfg.w, masks.t, masks.h, masks.w
        )));
    }
    if y.h != masks.h || y.w != masks.w {
        return Err(ReconError::ExtentMismatch(format!(
            "measurement {}x{} vs masks {}x{}",
            y.h, y.w, masks.h, masks.w
        )));
    }
    let raw = ck.net.forward(y, masks)?;
    Ok(raw.clipped_unit())
}

pub fn decode_from_path(y: &Measurement, masks: &MaskSet, path: &Path) -> Result<VideoCube> {
    let ck = checkpoint::load::<f32>(path)?;
    decode(y, masks, &ck)
}
