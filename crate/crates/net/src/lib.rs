//! Reconstruction network for ultra-sparse sampled video SCI.
//!
//! Blocks combine three attention branches over different token groupings:
//! local spatial windows, strided global grids, and per-site temporal
//! sequences. A convolutional extractor halves the spatial resolution in
//! front of the blocks and a transposed-convolution head restores it. The
//! whole forward pass is recorded on a differentiation tape, so training and
//! gradient checking share one code path. Also provides the closed-form
//! complexity report for the branch attention costs.

pub mod attention;
pub mod checkpoint;
pub mod config;
mod error;
pub mod flops;
pub mod network;
pub mod params;
pub mod partition;

pub use attention::{attention, AttentionParams};
pub use config::{BranchKind, BranchSet, NetworkConfig};
pub use error::{NetError, Result};
pub use flops::{count_flops, msa_flops, FlopReport};
pub use network::{
    coarse_input, cube_to_feature, feature_to_cube, ffn, network_forward, BstNet,
    NetworkGradProgram, Stage, LN_EPS,
};
pub use params::{param_layout, NetParams, ParamDef, ParamInit};
pub use partition::{
    grid_partition, grid_unpartition, temporal_partition, temporal_unpartition, window_partition,
    window_unpartition, PartitionPlan,
};
