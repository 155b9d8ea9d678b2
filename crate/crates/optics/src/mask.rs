//! Modulation mask sets.
//!
//! Two sampling schemes: RS (each element i.i.d. Bernoulli) and USS (per
//! pixel, exactly one of the T frames carries a 1, so the stack sums to the
//! all-one matrix). Every random draw is keyed by (seed, pixel index)
//! through a counter-based stream, so generation is reproducible and
//! independent of any evaluation order.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{OpticsError, Result};
use vsci_tensor::stns::{self, Payload, Record};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskScheme {
    Rs,
    Uss,
}

impl MaskScheme {
    pub fn name(self) -> &'static str {
        match self {
            MaskScheme::Rs => "rs",
            MaskScheme::Uss => "uss",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rs" => Some(MaskScheme::Rs),
            "uss" => Some(MaskScheme::Uss),
            _ => None,
        }
    }
}

impl fmt::Display for MaskScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// T binary (or, after degradation, fractional) modulation planes of extent
/// H x W, stored row-major as `[T,H,W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub scheme: MaskScheme,
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub seed: u64,
    /// Bernoulli density; present for RS sets only.
    pub density: Option<f64>,
    /// Ideal masks hold exact {0,1} values; degraded ones values in [0,1].
    pub ideal: bool,
    planes: Vec<f32>,
}

/// Findings of [`MaskSet::validate`].
#[derive(Debug, Clone)]
pub struct MaskReport {
    pub pass: bool,
    pub per_frame_fill: Vec<f64>,
    pub violations: usize,
    pub first_violation: Option<(usize, usize)>,
    /// Whether the USS one-hot property was part of the check.
    pub one_hot_checked: bool,
}

fn check_extents(t: usize, h: usize, w: usize) -> Result<()> {
    if t == 0 || h == 0 || w == 0 {
        return Err(OpticsError::DegenerateExtents(format!("{t}x{h}x{w}")));
    }
    Ok(())
}

impl MaskSet {
    /// RS masks: each element independently 1 with probability `density`.
    pub fn gen_rs(t: usize, h: usize, w: usize, density: f64, seed: u64) -> Result<MaskSet> {
        check_extents(t, h, w)?;
        if !(density > 0.0 && density < 1.0) {
            return Err(OpticsError::BadDensity(density));
        }
        let template = ChaCha8Rng::seed_from_u64(seed);
        let n = t * h * w;
        let mut planes = vec![0.0f32; n];
        for (i, slot) in planes.iter_mut().enumerate() {
            let mut rng = template.clone();
            rng.set_stream(i as u64);
            if rng.gen::<f64>() < density {
                *slot = 1.0;
            }
        }
        Ok(MaskSet {
            scheme: MaskScheme::Rs,
            t,
            h,
            w,
            seed,
            density: Some(density),
            ideal: true,
            planes,
        })
    }

    /// USS masks: per pixel, one frame index drawn uniformly from 0..T gets
    /// the 1. The stack then sums to the all-one matrix exactly.
    pub fn gen_uss(t: usize, h: usize, w: usize, seed: u64) -> Result<MaskSet> {
        check_extents(t, h, w)?;
        let template = ChaCha8Rng::seed_from_u64(seed);
        let plane = h * w;
        let mut planes = vec![0.0f32; t * plane];
        for pix in 0..plane {
            let mut rng = template.clone();
            rng.set_stream(pix as u64);
            let frame = rng.gen_range(0..t);
            planes[frame * plane + pix] = 1.0;
        }
        Ok(MaskSet {
            scheme: MaskScheme::Uss,
            t,
            h,
            w,
            seed,
            density: None,
            ideal: true,
            planes,
        })
    }

    pub fn plane(&self, m: usize) -> &[f32] {
        &self.planes[m * self.h * self.w..(m + 1) * self.h * self.w]
    }

    pub fn planes(&self) -> &[f32] {
        &self.planes
    }

    /// Per-pixel coverage sum over frames, in f64.
    pub fn coverage(&self) -> Vec<f64> {
        let plane = self.h * self.w;
        let mut cov = vec![0.0f64; plane];
        for m in 0..self.t {
            for (c, &v) in cov.iter_mut().zip(self.plane(m)) {
                *c += v as f64;
            }
        }
        cov
    }

    /// For USS sets: the frame index holding the 1 at each pixel.
    pub fn argmax_frame(&self) -> Vec<usize> {
        let plane = self.h * self.w;
        let mut idx = vec![0usize; plane];
        for pix in 0..plane {
            let mut best = 0usize;
            let mut best_v = f32::NEG_INFINITY;
            for m in 0..self.t {
                let v = self.planes[m * plane + pix];
                if v > best_v {
                    best_v = v;
                    best = m;
                }
            }
            idx[pix] = best;
        }
        idx
    }

    /// Checks binarity (ideal sets), the [0,1] range (degraded sets), and for
    /// ideal USS sets the exactly-one-hot property. Findings go in the
    /// report; this never errors.
    pub fn validate(&self) -> MaskReport {
        let plane = self.h * self.w;
        let mut violations = 0usize;
        let mut first = None;
        let mut record = |pix: usize, first: &mut Option<(usize, usize)>| {
            violations += 1;
            if first.is_none() {
                *first = Some((pix / self.w, pix % self.w));
            }
        };
        for m in 0..self.t {
            for (pix, &v) in self.plane(m).iter().enumerate() {
                let bad = if self.ideal {
                    v != 0.0 && v != 1.0
                } else {
                    !(0.0..=1.0).contains(&v)
                };
                if bad {
                    record(pix, &mut first);
                }
            }
        }
        let one_hot_checked = self.scheme == MaskScheme::Uss && self.ideal;
        if one_hot_checked {
            for pix in 0..plane {
                let mut ones = 0usize;
                for m in 0..self.t {
                    if self.planes[m * plane + pix] == 1.0 {
                        ones += 1;
                    }
                }
                if ones != 1 {
                    record(pix, &mut first);
                }
            }
        }
        let per_frame_fill = (0..self.t)
            .map(|m| self.plane(m).iter().map(|&v| v as f64).sum::<f64>() / plane as f64)
            .collect();
        MaskReport {
            pass: violations == 0,
            per_frame_fill,
            violations,
            first_violation: first,
            one_hot_checked,
        }
    }

    /// Models DMD/CCD misregistration: each plane is blurred with a truncated
    /// Gaussian and then shifted by a subpixel offset (bilinear, zero
    /// padding). The result is no longer ideal, so the one-hot invariant is
    /// not asserted for it.
    pub fn degrade(&self, blur_sigma: f64, shift: (f64, f64)) -> Result<MaskSet> {
        if blur_sigma < 0.0 {
            return Err(OpticsError::InvalidArgument(format!(
                "blur_sigma must be >= 0, got {blur_sigma}"
            )));
        }
        let kernel = gaussian_kernel(blur_sigma);
        if kernel.len() > self.h || kernel.len() > self.w {
            return Err(OpticsError::KernelTooLarge {
                kernel: kernel.len(),
                h: self.h,
                w: self.w,
            });
        }
        let plane_len = self.h * self.w;
        let mut planes = Vec::with_capacity(self.planes.len());
        for m in 0..self.t {
            let blurred = blur_plane(self.plane(m), self.h, self.w, &kernel);
            let shifted = bilinear_shift(&blurred, self.h, self.w, shift);
            debug_assert_eq!(shifted.len(), plane_len);
            planes.extend(shifted);
        }
        Ok(MaskSet {
            scheme: self.scheme,
            t: self.t,
            h: self.h,
            w: self.w,
            seed: self.seed,
            density: self.density,
            ideal: false,
            planes,
        })
    }

    /// Writes the planes as an STNS container (`u8` for ideal masks, `f32`
    /// otherwise) plus a `<path>.meta` sidecar with scheme, seed, density and
    /// the ideal flag.
    pub fn save(&self, path: &Path) -> Result<()> {
        let payload = if self.ideal {
            Payload::U8(self.planes.iter().map(|&v| v as u8).collect())
        } else {
            Payload::F32(self.planes.clone())
        };
        let rec = Record {
            shape: vec![self.t, self.h, self.w],
            payload,
        };
        stns::atomic_write(path, &stns::encode_record(&rec))?;
        let mut meta = format!(
            "scheme={}\nt={}\nh={}\nw={}\nseed={}\nideal={}\n",
            self.scheme, self.t, self.h, self.w, self.seed, self.ideal
        );
        if let Some(d) = self.density {
            meta.push_str(&format!("density={d}\n"));
        }
        stns::atomic_write(&meta_path(path), meta.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<MaskSet> {
        let meta_text = fs::read_to_string(meta_path(path))?;
        let mut scheme = None;
        let mut seed = None;
        let mut density = None;
        let mut ideal = None;
        let mut extents = [None; 3];
        for line in meta_text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| OpticsError::BadMetadata(format!("not key=value: '{line}'")))?;
            let bad = |what: &str| OpticsError::BadMetadata(format!("bad {what}: '{v}'"));
            match k {
                "scheme" => scheme = Some(MaskScheme::parse(v).ok_or_else(|| bad("scheme"))?),
                "t" => extents[0] = Some(v.parse().map_err(|_| bad("t"))?),
                "h" => extents[1] = Some(v.parse().map_err(|_| bad("h"))?),
                "w" => extents[2] = Some(v.parse().map_err(|_| bad("w"))?),
                "seed" => seed = Some(v.parse().map_err(|_| bad("seed"))?),
                "density" => density = Some(v.parse().map_err(|_| bad("density"))?),
                "ideal" => ideal = Some(v.parse().map_err(|_| bad("ideal"))?),
                other => {
                    return Err(OpticsError::BadMetadata(format!("unknown key '{other}'")))
                }
            }
        }
        let scheme = scheme.ok_or_else(|| OpticsError::BadMetadata("missing scheme".into()))?;
        let ideal = ideal.ok_or_else(|| OpticsError::BadMetadata("missing ideal flag".into()))?;
        let seed = seed.ok_or_else(|| OpticsError::BadMetadata("missing seed".into()))?;
        let (t, h, w) = match extents {
            [Some(t), Some(h), Some(w)] => (t, h, w),
            _ => return Err(OpticsError::BadMetadata("missing extents".into())),
        };

        let rec = stns::decode_record(&fs::read(path)?)?;
        if rec.shape != [t, h, w] {
            return Err(OpticsError::MetadataMismatch(format!(
                "sidecar says [{t},{h},{w}], container holds {:?}",
                rec.shape
            )));
        }
        let planes: Vec<f32> = match (&rec.payload, ideal) {
            (Payload::U8(v), true) => {
                if v.iter().any(|&b| b > 1) {
                    return Err(OpticsError::MetadataMismatch(
                        "ideal mask payload holds non-binary bytes".into(),
                    ));
                }
                v.iter().map(|&b| b as f32).collect()
            }
            (Payload::F32(v), false) => v.clone(),
            (p, _) => {
                return Err(OpticsError::MetadataMismatch(format!(
                    "payload dtype {} does not match ideal={ideal}",
                    p.dtype().name()
                )))
            }
        };
        Ok(MaskSet {
            scheme,
            t,
            h,
            w,
            seed,
            density,
            ideal,
            planes,
        })
    }

    #[cfg(test)]
    fn planes_mut(&mut self) -> &mut [f32] {
        &mut self.planes
    }

    /// Builds a mask set directly from planes; used for constructed cases.
    pub fn from_planes(
        scheme: MaskScheme,
        t: usize,
        h: usize,
        w: usize,
        ideal: bool,
        planes: Vec<f32>,
    ) -> Result<MaskSet> {
        check_extents(t, h, w)?;
        if planes.len() != t * h * w {
            return Err(OpticsError::ExtentMismatch {
                detail: format!("{} plane values for extents {t}x{h}x{w}", planes.len()),
            });
        }
        Ok(MaskSet {
            scheme,
            t,
            h,
            w,
            seed: 0,
            density: None,
            ideal,
            planes,
        })
    }
}

fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta");
    p.into()
}

/// Truncated normalized Gaussian, radius ceil(3 sigma). Sigma 0 yields the
/// identity kernel [1].
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable blur with zero padding. Accumulates in f64 and stores f32.
fn blur_plane(plane: &[f32], h: usize, w: usize, kernel: &[f64]) -> Vec<f32> {
    if kernel.len() == 1 {
        return plane.to_vec();
    }
    let radius = kernel.len() / 2;
    let mut rows = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &kv) in kernel.iter().enumerate() {
                let sx = x as isize + i as isize - radius as isize;
                if sx >= 0 && (sx as usize) < w {
                    acc += kv * plane[y * w + sx as usize] as f64;
                }
            }
            rows[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &kv) in kernel.iter().enumerate() {
                let sy = y as isize + i as isize - radius as isize;
                if sy >= 0 && (sy as usize) < h {
                    acc += kv * rows[sy as usize * w + x];
                }
            }
            out[y * w + x] = acc as f32;
        }
    }
    out
}

/// Samples the plane at (y - dy, x - dx) with bilinear weights and zero
/// padding. Integer zero shift reduces to the identity bitwise.
fn bilinear_shift(plane: &[f32], h: usize, w: usize, (dy, dx): (f64, f64)) -> Vec<f32> {
    if dy == 0.0 && dx == 0.0 {
        return plane.to_vec();
    }
    let sample = |y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            plane[y as usize * w + x as usize] as f64
        }
    };
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let sy = y as f64 - dy;
            let sx = x as f64 - dx;
            let y0 = sy.floor();
            let x0 = sx.floor();
            let fy = sy - y0;
            let fx = sx - x0;
            let (y0, x0) = (y0 as isize, x0 as isize);
            let v = (1.0 - fy) * (1.0 - fx) * sample(y0, x0)
                + (1.0 - fy) * fx * sample(y0, x0 + 1)
                + fy * (1.0 - fx) * sample(y0 + 1, x0)
                + fy * fx * sample(y0 + 1, x0 + 1);
            out[y * w + x] = v as f32;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rs_same_seed_identical() {
        let a = MaskSet::gen_rs(8, 16, 16, 0.5, 42).unwrap();
        let b = MaskSet::gen_rs(8, 16, 16, 0.5, 42).unwrap();
        assert_eq!(a, b);
        let c = MaskSet::gen_rs(8, 16, 16, 0.5, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rs_fill_fraction_concentrates() {
        // 64x64, density .5: binomial 5-sigma bound is +-0.039 per frame
        let m = MaskSet::gen_rs(8, 64, 64, 0.5, 7).unwrap();
        for fill in m.validate().per_frame_fill {
            assert!((0.46..=0.54).contains(&fill), "fill {fill}");
        }
    }

    #[test]
    fn rs_rejects_bad_args() {
        assert!(MaskSet::gen_rs(0, 4, 4, 0.5, 1).is_err());
        assert!(MaskSet::gen_rs(4, 0, 4, 0.5, 1).is_err());
        assert!(MaskSet::gen_rs(4, 4, 4, 0.0, 1).is_err());
        assert!(MaskSet::gen_rs(4, 4, 4, 1.0, 1).is_err());
    }

    #[test]
    fn uss_single_frame_is_all_ones() {
        let m = MaskSet::gen_uss(1, 5, 3, 9).unwrap();
        assert!(m.plane(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn uss_sums_to_all_ones_exactly() {
        let m = MaskSet::gen_uss(6, 17, 13, 123).unwrap();
        assert!(m.coverage().iter().all(|&c| c == 1.0));
        let r = m.validate();
        assert!(r.pass && r.violations == 0 && r.one_hot_checked);
    }

    #[test]
    fn uss_fill_fraction_concentrates() {
        let m = MaskSet::gen_uss(4, 128, 128, 3).unwrap();
        for fill in m.validate().per_frame_fill {
            assert!((0.23..=0.27).contains(&fill), "fill {fill}");
        }
    }

    #[test]
    fn validate_flags_constructed_fault() {
        let mut m = MaskSet::gen_uss(4, 8, 8, 5).unwrap();
        // zero one pixel in every frame
        let plane = 64;
        for f in 0..4 {
            m.planes_mut()[f * plane + 11] = 0.0;
        }
        let r = m.validate();
        assert!(!r.pass);
        assert_eq!(r.violations, 1);
        assert_eq!(r.first_violation, Some((1, 3)));
    }

    #[test]
    fn rs_binarity_pass_one_hot_skipped() {
        let m = MaskSet::gen_rs(4, 8, 8, 0.5, 5).unwrap();
        let r = m.validate();
        assert!(r.pass);
        assert!(!r.one_hot_checked);
    }

    #[test]
    fn degrade_zero_params_is_identity() {
        let m = MaskSet::gen_uss(4, 8, 8, 5).unwrap();
        let d = m.degrade(0.0, (0.0, 0.0)).unwrap();
        assert_eq!(d.planes(), m.planes());
        assert!(!d.ideal);
    }

    #[test]
    fn degrade_preserves_unit_coverage_in_interior() {
        // on a 16x16 USS set, coverage stays within kernel leakage of 1
        let m = MaskSet::gen_uss(3, 16, 16, 21).unwrap();
        let d = m.degrade(0.8, (0.3, -0.4)).unwrap();
        assert!(d.planes().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let cov = d.coverage();
        // interior pixels see the full kernel support
        for y in 4..12 {
            for x in 4..12 {
                let c = cov[y * 16 + x];
                assert!((c - 1.0).abs() < 1e-5, "coverage {c} at ({y},{x})");
            }
        }
        // borders only leak downward
        assert!(cov.iter().all(|&c| c <= 1.0 + 1e-5));
    }

    #[test]
    fn degrade_rejects_oversized_kernel() {
        let m = MaskSet::gen_uss(2, 6, 6, 1).unwrap();
        assert!(m.degrade(4.0, (0.0, 0.0)).is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.stns");
        for m in [
            MaskSet::gen_uss(4, 8, 6, 77).unwrap(),
            MaskSet::gen_rs(3, 5, 7, 0.4, 8).unwrap(),
            MaskSet::gen_uss(2, 8, 8, 1).unwrap().degrade(0.5, (0.1, 0.2)).unwrap(),
        ] {
            m.save(&path).unwrap();
            let back = MaskSet::load(&path).unwrap();
            assert_eq!(m, back);
        }
    }

    #[test]
    fn load_rejects_truncated_and_mismatched() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.stns");
        let m = MaskSet::gen_uss(4, 8, 6, 77).unwrap();
        m.save(&path).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(MaskSet::load(&path).is_err());

        // restore payload but claim different extents in the sidecar
        std::fs::write(&path, &bytes).unwrap();
        let meta = path.with_file_name("m.stns.meta");
        let text = std::fs::read_to_string(&meta).unwrap();
        std::fs::write(&meta, text.replace("t=4", "t=2")).unwrap();
        assert!(matches!(
            MaskSet::load(&path),
            Err(OpticsError::MetadataMismatch(_))
        ));
    }
}
