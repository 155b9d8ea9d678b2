//! Mask generation and the optical forward model for video snapshot
//! compressive imaging: RS and USS modulation masks, the
//! modulate-integrate-quantize measurement chain, its vectorized
//! sensing-matrix form, and the coarse-estimation initializer.

mod error;
pub mod mask;
pub mod sensing;

pub use error::{OpticsError, Result};
pub use mask::{MaskReport, MaskScheme, MaskSet};
pub use sensing::{
    build_sensing_matrix, coarse_estimate, decompose_uss, dequantize, encode, quantize,
    vectorized_encode, Measurement, MeasurementData, NoiseModel, QuantSpec, SensingMatrix,
    VideoCube, COVERAGE_EPS,
};
