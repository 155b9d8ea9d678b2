use std::fmt;

use crate::error::{NetError, Result};

/// The three attention branches of a block, in their fixed routing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    /// Self-attention inside non-overlapping SxS spatial windows per frame.
    LocalBlock,
    /// Self-attention over strided grids spanning the frame and all frames.
    GlobalSparse,
    /// Self-attention over the T temporal tokens at each spatial site.
    GlobalTemporal,
}

impl BranchKind {
    pub fn name(self) -> &'static str {
        match self {
            BranchKind::LocalBlock => "lba",
            BranchKind::GlobalSparse => "gsa",
            BranchKind::GlobalTemporal => "gta",
        }
    }
}

impl fmt::Display for BranchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which branches a block runs (the ablation switch).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchSet {
    pub local_block: bool,
    pub global_sparse: bool,
    pub global_temporal: bool,
}

impl BranchSet {
    pub fn all() -> Self {
        BranchSet {
            local_block: true,
            global_sparse: true,
            global_temporal: true,
        }
    }

    pub fn without(kind: BranchKind) -> Self {
        let mut s = Self::all();
        match kind {
            BranchKind::LocalBlock => s.local_block = false,
            BranchKind::GlobalSparse => s.global_sparse = false,
            BranchKind::GlobalTemporal => s.global_temporal = false,
        }
        s
    }

    pub fn kinds(&self) -> Vec<BranchKind> {
        let mut v = Vec::new();
        if self.local_block {
            v.push(BranchKind::LocalBlock);
        }
        if self.global_sparse {
            v.push(BranchKind::GlobalSparse);
        }
        if self.global_temporal {
            v.push(BranchKind::GlobalTemporal);
        }
        v
    }

    pub fn count(&self) -> usize {
        self.kinds().len()
    }

    /// Parses a comma list like `lba,gsa,gta`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut set = BranchSet {
            local_block: false,
            global_sparse: false,
            global_temporal: false,
        };
        for part in s.split(',') {
            match part.trim() {
                "lba" => set.local_block = true,
                "gsa" => set.global_sparse = true,
                "gta" => set.global_temporal = true,
                other => {
                    return Err(NetError::Config(format!("unknown branch '{other}'")));
                }
            }
        }
        Ok(set)
    }
}

impl fmt::Display for BranchSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.kinds().iter().map(|k| k.name()).collect();
        f.write_str(&names.join(","))
    }
}

/// Architecture hyperparameters plus the input extents the network expects.
/// Attention runs at half the input resolution (the feature extractor
/// strides 2 spatially), so H/2 and W/2 must divide by the window and grid
/// sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    /// Feature channels C; split evenly across the enabled branches.
    pub channels: usize,
    pub blocks: usize,
    /// Spatial window size S for local block attention.
    pub window: usize,
    /// Grid count per spatial axis G for global sparse attention.
    pub grid: usize,
    pub heads: usize,
    pub leaky_slope: f64,
    /// Hidden-width multiple of the per-branch feed-forward refinement.
    pub ffn_expansion: usize,
    pub branches: BranchSet,
}

impl NetworkConfig {
    /// Desk-scale reference: 32x32 inputs, 24 channels, 2 blocks, S=G=4.
    pub fn toy() -> Self {
        NetworkConfig {
            t: 8,
            h: 32,
            w: 32,
            channels: 24,
            blocks: 2,
            window: 4,
            grid: 4,
            heads: 4,
            leaky_slope: 0.1,
            ffn_expansion: 2,
            branches: BranchSet::all(),
        }
    }

    /// Full-scale configuration (256x256, 192 channels, 4 blocks, S=G=7).
    /// Expressible but not runnable here: 128 is not divisible by 7 and this
    /// implementation does not pad attention windows, so `validate` rejects
    /// it.
    pub fn reference() -> Self {
        NetworkConfig {
            t: 8,
            h: 256,
            w: 256,
            channels: 192,
            blocks: 4,
            window: 7,
            grid: 7,
            heads: 4,
            leaky_slope: 0.1,
            ffn_expansion: 2,
            branches: BranchSet::all(),
        }
    }

    /// Channels per enabled branch.
    pub fn branch_channels(&self) -> usize {
        self.channels / self.branches.count().max(1)
    }

    /// Feature-map extents after the stride-2 extraction.
    pub fn feature_hw(&self) -> (usize, usize) {
        (self.h / 2, self.w / 2)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(NetError::Config(msg));
        if self.t == 0 || self.h == 0 || self.w == 0 {
            return fail(format!("degenerate extents {}x{}x{}", self.t, self.h, self.w));
        }
        if self.h % 2 != 0 || self.w % 2 != 0 {
            return fail(format!(
                "spatial extents must be even for the stride-2 extractor, got {}x{}",
                self.h, self.w
            ));
        }
        if self.blocks == 0 {
            return fail("need at least one block".into());
        }
        let n = self.branches.count();
        if n == 0 {
            return fail("at least one attention branch must be enabled".into());
        }
        if self.channels == 0 || self.channels % n != 0 {
            return fail(format!(
                "channels ({}) must divide evenly across {} branches",
                self.channels, n
            ));
        }
        let cb = self.channels / n;
        if self.heads == 0 || cb % self.heads != 0 {
            return fail(format!(
                "branch channels ({cb}) must divide across {} heads",
                self.heads
            ));
        }
        let (fh, fw) = self.feature_hw();
        if self.branches.local_block {
            if self.window == 0 || fh % self.window != 0 || fw % self.window != 0 {
                return fail(format!(
                    "window {} must divide the half-resolution extents {}x{}",
                    self.window, fh, fw
                ));
            }
        }
        if self.branches.global_sparse {
            if self.grid == 0 || fh % self.grid != 0 || fw % self.grid != 0 {
                return fail(format!(
                    "grid {} must divide the half-resolution extents {}x{}",
                    self.grid, fh, fw
                ));
            }
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return fail(format!("leaky slope {} outside (0,1)", self.leaky_slope));
        }
        if self.ffn_expansion == 0 {
            return fail("ffn expansion must be >= 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_is_valid() {
        NetworkConfig::toy().validate().unwrap();
    }

    #[test]
    fn reference_is_expressible_but_rejected() {
        // 256/2 = 128 is not divisible by 7; windows are not padded here
        let c = NetworkConfig::reference();
        assert!(c.validate().is_err());
    }

    #[test]
    fn ablation_splits_channels_in_halves() {
        for kind in [
            BranchKind::LocalBlock,
            BranchKind::GlobalSparse,
            BranchKind::GlobalTemporal,
        ] {
            let mut c = NetworkConfig::toy();
            c.branches = BranchSet::without(kind);
            c.validate().unwrap();
            assert_eq!(c.branch_channels(), 12);
            assert_eq!(c.branches.count(), 2);
        }
    }

    #[test]
    fn divisibility_violations_rejected() {
        let mut c = NetworkConfig::toy();
        c.channels = 25;
        assert!(c.validate().is_err());

        let mut c = NetworkConfig::toy();
        c.window = 5; // 16 % 5 != 0
        assert!(c.validate().is_err());

        let mut c = NetworkConfig::toy();
        c.h = 31;
        assert!(c.validate().is_err());

        let mut c = NetworkConfig::toy();
        c.heads = 5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn branch_set_parse_roundtrip() {
        let s = BranchSet::parse("lba,gta").unwrap();
        assert!(s.local_block && !s.global_sparse && s.global_temporal);
        assert_eq!(s.to_string(), "lba,gta");
        assert!(BranchSet::parse("lba,frobnicate").is_err());
    }
}
