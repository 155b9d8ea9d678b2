//! The optical forward model: per-frame modulation, temporal integration,
//! measurement noise, ADC quantization, the vectorized sensing-matrix form,
//! the USS decomposition, and the coarse-estimation initializer that feeds
//! the reconstruction network.
//!
//! All analog math runs in f64 so the modulation/vectorization equivalence
//! checks can demand bitwise agreement.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{OpticsError, Result};
use crate::mask::{MaskScheme, MaskSet};
use vsci_tensor::stns::{self, Payload, Record};

/// Clamp floor applied to the coverage sum before the normalization divide;
/// degraded masks can sum below one near borders.
pub const COVERAGE_EPS: f64 = 1e-6;

/// T grayscale frames with nominal range [0,1], stored row-major `[T,H,W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoCube {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    data: Vec<f64>,
}

impl VideoCube {
    pub fn new(t: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != t * h * w {
            return Err(OpticsError::ExtentMismatch {
                detail: format!("{} values for extents {t}x{h}x{w}", data.len()),
            });
        }
        Ok(VideoCube { t, h, w, data })
    }

    pub fn zeros(t: usize, h: usize, w: usize) -> Self {
        VideoCube {
            t,
            h,
            w,
            data: vec![0.0; t * h * w],
        }
    }

    pub fn frame(&self, m: usize) -> &[f64] {
        &self.data[m * self.h * self.w..(m + 1) * self.h * self.w]
    }

    pub fn frame_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.data[m * self.h * self.w..(m + 1) * self.h * self.w]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Frames stacked into one vector: `[vec(X_1); ...; vec(X_T)]` with
    /// row-major (H,W) vectorization, matching the sensing-matrix layout.
    pub fn vectorize(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn clipped_unit(&self) -> VideoCube {
        VideoCube {
            t: self.t,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let rec = Record {
            shape: vec![self.t, self.h, self.w],
            payload: Payload::F32(self.data.iter().map(|&v| v as f32).collect()),
        };
        stns::atomic_write(path, &stns::encode_record(&rec))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<VideoCube> {
        let rec = stns::decode_record(&std::fs::read(path)?)?;
        if rec.shape.len() != 3 {
            return Err(OpticsError::ExtentMismatch {
                detail: format!("video container must be [T,H,W], got {:?}", rec.shape),
            });
        }
        let data: Vec<f64> = match rec.payload {
            Payload::F32(v) => v.into_iter().map(|x| x as f64).collect(),
            Payload::F64(v) => v,
            Payload::U8(v) => v.into_iter().map(|x| x as f64 / 255.0).collect(),
        };
        VideoCube::new(rec.shape[0], rec.shape[1], rec.shape[2], data)
    }
}

/// A single compressed frame: analog (floats, unclipped) or quantized ADC
/// codes with the fraction of clipped-high pixels.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasurementData {
    Analog(Vec<f64>),
    Quantized(Vec<u16>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub h: usize,
    pub w: usize,
    pub data: MeasurementData,
    /// Share of pixels clipped at the top code; set by quantization.
    pub saturation_fraction: Option<f64>,
}

impl Measurement {
    pub fn analog(h: usize, w: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != h * w {
            return Err(OpticsError::ExtentMismatch {
                detail: format!("{} values for {h}x{w} measurement", values.len()),
            });
        }
        Ok(Measurement {
            h,
            w,
            data: MeasurementData::Analog(values),
            saturation_fraction: None,
        })
    }

    pub fn analog_values(&self) -> Result<&[f64]> {
        match &self.data {
            MeasurementData::Analog(v) => Ok(v),
            MeasurementData::Quantized(_) => Err(OpticsError::InvalidArgument(
                "operation needs an analog measurement, got quantized codes".into(),
            )),
        }
    }

    pub fn codes(&self) -> Result<&[u16]> {
        match &self.data {
            MeasurementData::Quantized(v) => Ok(v),
            MeasurementData::Analog(_) => Err(OpticsError::InvalidArgument(
                "operation needs a quantized measurement".into(),
            )),
        }
    }

    /// Analog measurements persist as f32, 8-bit codes as u8, wider codes as
    /// f32 (exact for <= 16-bit integers).
    pub fn save(&self, path: &Path) -> Result<()> {
        let payload = match &self.data {
            MeasurementData::Analog(v) => Payload::F32(v.iter().map(|&x| x as f32).collect()),
            MeasurementData::Quantized(v) => {
                if v.iter().all(|&c| c <= u8::MAX as u16) {
                    Payload::U8(v.iter().map(|&c| c as u8).collect())
                } else {
                    Payload::F32(v.iter().map(|&c| c as f32).collect())
                }
            }
        };
        let rec = Record {
            shape: vec![self.h, self.w],
            payload,
        };
        stns::atomic_write(path, &stns::encode_record(&rec))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Measurement> {
        let rec = stns::decode_record(&std::fs::read(path)?)?;
        if rec.shape.len() != 2 {
            return Err(OpticsError::ExtentMismatch {
                detail: format!("measurement container must be [H,W], got {:?}", rec.shape),
            });
        }
        let (h, w) = (rec.shape[0], rec.shape[1]);
        let data = match rec.payload {
            Payload::F32(v) => MeasurementData::Analog(v.into_iter().map(|x| x as f64).collect()),
            Payload::F64(v) => MeasurementData::Analog(v),
            Payload::U8(v) => MeasurementData::Quantized(v.into_iter().map(|x| x as u16).collect()),
        };
        Ok(Measurement {
            h,
            w,
            data,
            saturation_fraction: None,
        })
    }

    /// 8-bit grayscale PNG export for quantized measurements.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let codes = self.codes()?;
        if codes.iter().any(|&c| c > u8::MAX as u16) {
            return Err(OpticsError::InvalidArgument(
                "png export requires 8-bit codes".into(),
            ));
        }
        let img = image::GrayImage::from_raw(
            self.w as u32,
            self.h as u32,
            codes.iter().map(|&c| c as u8).collect(),
        )
        .expect("raw buffer matches extents");
        img.save(path)?;
        Ok(())
    }
}

/// Additive measurement noise drawn ahead of quantization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    None,
    Gaussian { sigma: f64, seed: u64 },
}

impl NoiseModel {
    fn sample(&self, n: usize) -> Option<Vec<f64>> {
        match *self {
            NoiseModel::None => None,
            NoiseModel::Gaussian { sigma, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let normal = Normal::new(0.0, sigma).expect("sigma validated");
                Some((0..n).map(|_| normal.sample(&mut rng)).collect())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let NoiseModel::Gaussian { sigma, .. } = self {
            if *sigma < 0.0 || !sigma.is_finite() {
                return Err(OpticsError::InvalidArgument(format!(
                    "noise sigma must be finite and >= 0, got {sigma}"
                )));
            }
        }
        Ok(())
    }
}

/// ADC model: `codes = clip(round(gain * y / full_scale * (2^bits - 1)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantSpec {
    pub bits: u32,
    pub full_scale: f64,
    pub gain: f64,
}

impl QuantSpec {
    pub fn new(bits: u32, full_scale: f64, gain: f64) -> Result<Self> {
        if ![8, 10, 12, 16].contains(&bits) {
            return Err(OpticsError::InvalidArgument(format!(
                "bit depth must be one of 8/10/12/16, got {bits}"
            )));
        }
        if !(full_scale > 0.0) || gain < 0.0 {
            return Err(OpticsError::InvalidArgument(format!(
                "need full_scale > 0 and gain >= 0, got {full_scale} and {gain}"
            )));
        }
        Ok(QuantSpec {
            bits,
            full_scale,
            gain,
        })
    }

    pub fn max_code(&self) -> u32 {
        (1u32 << self.bits) - 1
    }
}

/// Block-diagonal sensing matrix in factored form: the diagonals of
/// `D_1 .. D_T`, never materialized densely.
#[derive(Debug, Clone)]
pub struct SensingMatrix {
    pub t: usize,
    pub n: usize,
    diagonals: Vec<Vec<f64>>,
}

impl SensingMatrix {
    pub fn diagonal(&self, m: usize) -> &[f64] {
        &self.diagonals[m]
    }

    /// Row-sum of Phi Phi^T, a diagonal matrix: per-pixel sum of squared
    /// mask values.
    pub fn gram_diagonal(&self) -> Vec<f64> {
        let mut g = vec![0.0f64; self.n];
        for d in &self.diagonals {
            for (gi, &v) in g.iter_mut().zip(d) {
                *gi += v * v;
            }
        }
        g
    }
}

fn check_cube_masks(x: &VideoCube, m: &MaskSet) -> Result<()> {
    if x.t != m.t || x.h != m.h || x.w != m.w {
        return Err(OpticsError::ExtentMismatch {
            detail: format!(
                "video {}x{}x{} vs masks {}x{}x{}",
                x.t, x.h, x.w, m.t, m.h, m.w
            ),
        });
    }
    Ok(())
}

fn check_meas_masks(y: &Measurement, m: &MaskSet) -> Result<()> {
    if y.h != m.h || y.w != m.w {
        return Err(OpticsError::ExtentMismatch {
            detail: format!("measurement {}x{} vs masks {}x{}", y.h, y.w, m.h, m.w),
        });
    }
    Ok(())
}

/// Forward model: `Y = sum_m X_m (.) M_m + G`, analog and unclipped.
pub fn encode(x: &VideoCube, m: &MaskSet, noise: &NoiseModel) -> Result<Measurement> {
    check_cube_masks(x, m)?;
    noise.validate()?;
    let plane = x.h * x.w;
    let mut y = vec![0.0f64; plane];
    for frame in 0..x.t {
        let xf = x.frame(frame);
        let mf = m.plane(frame);
        for i in 0..plane {
            y[i] += xf[i] * mf[i] as f64;
        }
    }
    if let Some(g) = noise.sample(plane) {
        for (yi, gi) in y.iter_mut().zip(g) {
            *yi += gi;
        }
    }
    Measurement::analog(x.h, x.w, y)
}

/// ADC stage. Noise (if any) was already added by `encode`; this clips and
/// rounds, recording the clipped-high share.
pub fn quantize(y: &Measurement, q: &QuantSpec) -> Result<Measurement> {
    let analog = y.analog_values()?;
    let max_code = q.max_code() as f64;
    let mut clipped_high = 0usize;
    let codes: Vec<u16> = analog
        .iter()
        .map(|&v| {
            let raw = (q.gain * v / q.full_scale * max_code).round();
            if raw > max_code {
                clipped_high += 1;
            }
            raw.clamp(0.0, max_code) as u16
        })
        .collect();
    Ok(Measurement {
        h: y.h,
        w: y.w,
        data: MeasurementData::Quantized(codes),
        saturation_fraction: Some(clipped_high as f64 / analog.len() as f64),
    })
}

/// Maps codes back to analog units (the inverse of the quantizer's scaling;
/// clipping is not invertible).
pub fn dequantize(y: &Measurement, q: &QuantSpec) -> Result<Measurement> {
    let codes = y.codes()?;
    if q.gain <= 0.0 {
        return Err(OpticsError::InvalidArgument(
            "dequantize needs gain > 0".into(),
        ));
    }
    let max_code = q.max_code() as f64;
    let values = codes
        .iter()
        .map(|&c| c as f64 / max_code * q.full_scale / q.gain)
        .collect();
    let mut out = Measurement::analog(y.h, y.w, values)?;
    out.saturation_fraction = y.saturation_fraction;
    Ok(out)
}

/// The diagonals of `D_1 .. D_T`, vectorized in the same row-major (H,W)
/// order as `VideoCube::vectorize`.
pub fn build_sensing_matrix(m: &MaskSet) -> SensingMatrix {
    let n = m.h * m.w;
    let diagonals = (0..m.t)
        .map(|f| m.plane(f).iter().map(|&v| v as f64).collect())
        .collect();
    SensingMatrix {
        t: m.t,
        n,
        diagonals,
    }
}

/// Vectorized forward model `y = Phi x + g`. Accumulates per pixel over
/// frames in ascending order, exactly like `encode`, so the two agree
/// bitwise for matching noise seeds.
pub fn vectorized_encode(x: &[f64], phi: &SensingMatrix, noise: &NoiseModel) -> Result<Vec<f64>> {
    if x.len() != phi.n * phi.t {
        return Err(OpticsError::ExtentMismatch {
            detail: format!(
                "vector length {} vs sensing matrix {} x {}",
                x.len(),
                phi.n,
                phi.n * phi.t
            ),
        });
    }
    noise.validate()?;
    let mut y = vec![0.0f64; phi.n];
    for m in 0..phi.t {
        let d = phi.diagonal(m);
        let xm = &x[m * phi.n..(m + 1) * phi.n];
        for i in 0..phi.n {
            y[i] += xm[i] * d[i];
        }
    }
    if let Some(g) = noise.sample(phi.n) {
        for (yi, gi) in y.iter_mut().zip(g) {
            *yi += gi;
        }
    }
    Ok(y)
}

/// Splits an ideal USS measurement into its T sub-measurements
/// `Y_m = Y (.) M_m`; they partition Y exactly. Undefined for RS or
/// degraded masks.
pub fn decompose_uss(y: &Measurement, m: &MaskSet) -> Result<Vec<Measurement>> {
    check_meas_masks(y, m)?;
    if m.scheme != MaskScheme::Uss || !m.ideal {
        return Err(OpticsError::WrongMaskKind {
            required: "ideal USS masks",
            actual: format!(
                "{} ({})",
                m.scheme,
                if m.ideal { "ideal" } else { "degraded" }
            ),
        });
    }
    let values = y.analog_values()?;
    (0..m.t)
        .map(|f| {
            let sub: Vec<f64> = values
                .iter()
                .zip(m.plane(f))
                .map(|(&v, &mask)| v * mask as f64)
                .collect();
            Measurement::analog(y.h, y.w, sub)
        })
        .collect()
}

/// Initialization used by the reconstruction network: the normalized
/// measurement re-modulated by each mask plus itself,
/// `X_e,m = Ybar (.) M_m + Ybar` with `Ybar = Y / sum_m M_m` (denominator
/// clamped at `COVERAGE_EPS` for zero-coverage pixels).
pub fn coarse_estimate(y: &Measurement, m: &MaskSet) -> Result<VideoCube> {
    check_meas_masks(y, m)?;
    let values = y.analog_values()?;
    let cov = m.coverage();
    let plane = m.h * m.w;
    let ybar: Vec<f64> = values
        .iter()
        .zip(&cov)
        .map(|(&v, &c)| v / c.max(COVERAGE_EPS))
        .collect();
    let mut cube = VideoCube::zeros(m.t, m.h, m.w);
    for f in 0..m.t {
        let mf = m.plane(f);
        let frame = cube.frame_mut(f);
        for i in 0..plane {
            frame[i] = ybar[i] * mf[i] as f64 + ybar[i];
        }
    }
    Ok(cube)
}
