//! Closed-form complexity accounting for the attention branches.
//!
//! Counts follow the multiply-accumulate convention of
//! `msa_flops(seq, c) = 4 seq c^2 + 2 seq^2 c`: the four projections of a
//! sequence of `seq` tokens at width `c` cost `4 seq c^2`, the score and
//! value products `2 seq^2 c`. Softmax, scaling, normalization and the
//! feed-forward convolutions are outside the convention. The per-branch
//! closed forms assume the three-way channel split (C/3 per branch) and tie
//! the local window size to the grid count, and are evaluated at the
//! config's nominal H and W as given (the feature extractor's downsampling
//! is not folded in).

use crate::config::NetworkConfig;
use crate::error::{NetError, Result};

/// Branch and total complexities in multiply-accumulate pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlopReport {
    pub lba: u128,
    pub gsa: u128,
    pub gta: u128,
    /// Sum of the three branches.
    pub bstf: u128,
    /// Dense global spatio-temporal attention at full width, for contrast.
    pub gmsa: u128,
}

/// Multi-head self-attention cost for one sequence: `4 S C^2 + 2 S^2 C`.
pub fn msa_flops(seq: u128, c: u128) -> u128 {
    4 * seq * c * c + 2 * seq * seq * c
}

/// Evaluates the closed forms exactly in integer arithmetic. Requires
/// `channels` divisible by 3 (the forms are written for the three-branch
/// split regardless of which branches run).
pub fn count_flops(config: &NetworkConfig) -> Result<FlopReport> {
    let (h, w, t, c, g) = (
        config.h as u128,
        config.w as u128,
        config.t as u128,
        config.channels as u128,
        config.grid as u128,
    );
    if h == 0 || w == 0 || t == 0 || c == 0 || g == 0 {
        return Err(NetError::Config("degenerate extents in flop count".into()));
    }
    if c % 3 != 0 {
        return Err(NetError::Config(format!(
            "complexity forms assume a three-way channel split; {c} is not divisible by 3"
        )));
    }
    let c3 = c / 3;
    // (4/9) H W T C^2 = 4 H W T (C/3)^2, (2/3) X C = 2 X (C/3)
    let spatial = 4 * h * w * t * c3 * c3 + 2 * g * g * h * w * t * c3;
    let temporal = 4 * h * w * t * c3 * c3 + 2 * h * w * t * t * c3;
    let lba = spatial;
    let gsa = spatial;
    let gta = temporal;
    Ok(FlopReport {
        lba,
        gsa,
        gta,
        bstf: lba + gsa + gta,
        gmsa: 4 * h * w * t * c * c + 2 * (h * w * t) * (h * w * t) * c,
    })
}
