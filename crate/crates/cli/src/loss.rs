//! Frame-cube mean squared error, the training objective.

use anyhow::{bail, Result};
use vsci_optics::VideoCube;

/// `(1 / (T n_x n_y)) sum_m ||a_m - b_m||^2`.
pub fn mse_loss(a: &VideoCube, b: &VideoCube) -> Result<f64> {
    if a.t != b.t || a.h != b.h || a.w != b.w {
        bail!(
            "extent mismatch: {}x{}x{} vs {}x{}x{}",
            a.t, a.h, a.w, b.t, b.h, b.w
        );
    }
    let mut acc = 0.0;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = x - y;
        acc += d * d;
    }
    Ok(acc / a.data().len() as f64)
}
