//! Training-time augmentation: optional rescale from {0.75, 1.0, 1.25},
//! crop to the training size (random or centered), optional horizontal flip.

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vsci_optics::VideoCube;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentConfig {
    pub crop: usize,
    pub random_crop: bool,
    pub flip: bool,
    pub rescale: bool,
}

impl AugmentConfig {
    pub fn disabled(crop: usize) -> Self {
        AugmentConfig {
            crop,
            random_crop: false,
            flip: false,
            rescale: false,
        }
    }
}

pub fn hflip(clip: &VideoCube) -> VideoCube {
    let mut out = VideoCube::zeros(clip.t, clip.h, clip.w);
    for m in 0..clip.t {
        let src = clip.frame(m);
        let dst = out.frame_mut(m);
        for y in 0..clip.h {
            for x in 0..clip.w {
                dst[y * clip.w + x] = src[y * clip.w + (clip.w - 1 - x)];
            }
        }
    }
    out
}

fn bilinear_resize_frame(src: &[f64], h: usize, w: usize, nh: usize, nw: usize) -> Vec<f64> {
    let mut out = vec![0.0; nh * nw];
    for y in 0..nh {
        for x in 0..nw {
            // edge-clamped sampling at the source-grid position
            let sy = if nh > 1 {
                y as f64 * (h - 1) as f64 / (nh - 1) as f64
            } else {
                0.0
            };
            let sx = if nw > 1 {
                x as f64 * (w - 1) as f64 / (nw - 1) as f64
            } else {
                0.0
            };
            let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
            out[y * nw + x] = (1.0 - fy) * (1.0 - fx) * src[y0 * w + x0]
                + (1.0 - fy) * fx * src[y0 * w + x1]
                + fy * (1.0 - fx) * src[y1 * w + x0]
                + fy * fx * src[y1 * w + x1];
        }
    }
    out
}

pub fn rescale(clip: &VideoCube, factor: f64) -> VideoCube {
    let nh = ((clip.h as f64 * factor).round() as usize).max(1);
    let nw = ((clip.w as f64 * factor).round() as usize).max(1);
    let mut out = VideoCube::zeros(clip.t, nh, nw);
    for m in 0..clip.t {
        let resized = bilinear_resize_frame(clip.frame(m), clip.h, clip.w, nh, nw);
        out.frame_mut(m).copy_from_slice(&resized);
    }
    out
}

fn crop(clip: &VideoCube, y0: usize, x0: usize, size: usize) -> VideoCube {
    let mut out = VideoCube::zeros(clip.t, size, size);
    for m in 0..clip.t {
        let src = clip.frame(m);
        let dst = out.frame_mut(m);
        for y in 0..size {
            dst[y * size..(y + 1) * size]
                .copy_from_slice(&src[(y0 + y) * clip.w + x0..(y0 + y) * clip.w + x0 + size]);
        }
    }
    out
}

/// Applies the configured augmentations; output extents are always exactly
/// `crop x crop`.
pub fn augment(clip: &VideoCube, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Result<VideoCube> {
    if clip.h < cfg.crop || clip.w < cfg.crop {
        bail!(
            "clip {}x{} smaller than crop size {}",
            clip.h,
            clip.w,
            cfg.crop
        );
    }
    let mut work = if cfg.rescale {
        // only factors that keep the clip croppable are eligible
        let eligible: Vec<f64> = [0.75, 1.0, 1.25]
            .into_iter()
            .filter(|f| {
                (clip.h as f64 * f).round() as usize >= cfg.crop
                    && (clip.w as f64 * f).round() as usize >= cfg.crop
            })
            .collect();
        let f = eligible[rng.gen_range(0..eligible.len())];
        if f == 1.0 {
            clip.clone()
        } else {
            rescale(clip, f)
        }
    } else {
        clip.clone()
    };

    let (max_y, max_x) = (work.h - cfg.crop, work.w - cfg.crop);
    let (y0, x0) = if cfg.random_crop {
        (rng.gen_range(0..=max_y), rng.gen_range(0..=max_x))
    } else {
        (max_y / 2, max_x / 2)
    };
    work = crop(&work, y0, x0, cfg.crop);

    if cfg.flip && rng.gen_bool(0.5) {
        work = hflip(&work);
    }
    Ok(work)
}

/// Seeded convenience wrapper.
pub fn augment_seeded(clip: &VideoCube, cfg: &AugmentConfig, seed: u64) -> Result<VideoCube> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    augment(clip, cfg, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numbered(t: usize, h: usize, w: usize) -> VideoCube {
        let mut c = VideoCube::zeros(t, h, w);
        for m in 0..t {
            for i in 0..h * w {
                c.frame_mut(m)[i] = ((m * h * w + i) % 97) as f64 / 97.0;
            }
        }
        c
    }

    #[test]
    fn disabled_augment_is_center_crop() {
        let clip = numbered(2, 12, 10);
        let out = augment_seeded(&clip, &AugmentConfig::disabled(8), 1).unwrap();
        assert_eq!((out.t, out.h, out.w), (2, 8, 8));
        // center offset (2, 1)
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(out.frame(0)[y * 8 + x], clip.frame(0)[(y + 2) * 10 + (x + 1)]);
            }
        }
    }

    #[test]
    fn double_flip_is_identity() {
        let clip = numbered(3, 6, 7);
        assert_eq!(hflip(&hflip(&clip)), clip);
    }

    #[test]
    fn output_extents_always_match_crop() {
        let clip = numbered(2, 32, 32);
        let cfg = AugmentConfig {
            crop: 24,
            random_crop: true,
            flip: true,
            rescale: true,
        };
        for seed in 0..16 {
            let out = augment_seeded(&clip, &cfg, seed).unwrap();
            assert_eq!((out.h, out.w), (24, 24));
        }
    }

    #[test]
    fn too_small_clip_rejected() {
        let clip = numbered(1, 6, 6);
        assert!(augment_seeded(&clip, &AugmentConfig::disabled(8), 0).is_err());
    }
}
