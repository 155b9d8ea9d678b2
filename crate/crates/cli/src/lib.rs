//! Pipeline pieces behind the `vsci` binary: synthetic scenes, dataset
//! ingestion, augmentation, the training loop, evaluation, and the
//! dynamic-range experiment.

pub mod augment;
pub mod dataset;
pub mod dynrange;
pub mod evaluate;
pub mod loss;
pub mod record;
pub mod synth;
pub mod train;
