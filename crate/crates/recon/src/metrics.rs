//! Reconstruction quality metrics: PSNR (per frame, then averaged, capped at
//! 99 dB so identical inputs stay representable) and mean structural
//! similarity with the standard 11x11 Gaussian window, sigma 1.5,
//! k1 = 0.01, k2 = 0.03 on unit-range inputs.

use vsci_optics::VideoCube;

use crate::error::{ReconError, Result};

pub const PSNR_CAP: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsResult {
    pub psnr: f64,
    pub ssim: f64,
}

fn check_extents(a: &VideoCube, b: &VideoCube) -> Result<()> {
    if a.t != b.t || a.h != b.h || a.w != b.w {
        return Err(ReconError::ExtentMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.t, a.h, a.w, b.t, b.h, b.w
        )));
    }
    Ok(())
}

/// Correctly-rounded sum of the terms (Shewchuk partials). The result
/// depends only on the multiset of inputs, which makes the PSNR exactly
/// invariant under pixel permutations applied to both arguments.
fn exact_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut kept = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }
    // round the exact value once, smallest partials first, with the
    // half-way correction against the next partial down
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y2 = lo * 2.0;
        let x2 = hi + y2;
        if y2 == x2 - hi {
            hi = x2;
        }
    }
    hi
}

/// `10 log10(peak^2 / MSE)` per frame, averaged over frames.
pub fn psnr(a: &VideoCube, b: &VideoCube, peak: f64) -> Result<f64> {
    check_extents(a, b)?;
    if !(peak > 0.0) {
        return Err(ReconError::InvalidArgument(format!("peak must be > 0, got {peak}")));
    }
    let mut total = 0.0;
    for m in 0..a.t {
        let (fa, fb) = (a.frame(m), b.frame(m));
        let se = exact_sum(fa.iter().zip(fb).map(|(&x, &y)| {
            let d = x - y;
            d * d
        }));
        let mse = se / fa.len() as f64;
        let frame_psnr = if mse == 0.0 {
            PSNR_CAP
        } else {
            (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP)
        };
        total += frame_psnr;
    }
    Ok(total / a.t as f64)
}

/// 11x11 Gaussian window, sigma 1.5, evaluated on fully-covered (valid)
/// positions only and averaged over frames.
pub fn ssim(a: &VideoCube, b: &VideoCube) -> Result<f64> {
    ssim_with(a, b, 11, 0.01, 0.03)
}

pub fn ssim_with(a: &VideoCube, b: &VideoCube, window: usize, k1: f64, k2: f64) -> Result<f64> {
    check_extents(a, b)?;
    if window == 0 || window % 2 == 0 {
        return Err(ReconError::InvalidArgument(format!(
            "window must be odd and positive, got {window}"
        )));
    }
    if a.h < window || a.w < window {
        return Err(ReconError::ExtentMismatch(format!(
            "frames {}x{} smaller than the {window}x{window} window",
            a.h, a.w
        )));
    }
    let kernel = gaussian_window(window, 1.5);
    let c1 = (k1 * 1.0f64).powi(2);
    let c2 = (k2 * 1.0f64).powi(2);
    let half = window / 2;
    let (h, w) = (a.h, a.w);

    let mut total = 0.0;
    for m in 0..a.t {
        let (fa, fb) = (a.frame(m), b.frame(m));
        let mut frame_sum = 0.0;
        let mut count = 0usize;
        for cy in half..h - half {
            for cx in half..w - half {
                let mut mu_a = 0.0;
                let mut mu_b = 0.0;
                let mut aa = 0.0;
                let mut bb = 0.0;
                let mut ab = 0.0;
                for ky in 0..window {
                    for kx in 0..window {
                        let wgt = kernel[ky * window + kx];
                        let va = fa[(cy + ky - half) * w + (cx + kx - half)];
                        let vb = fb[(cy + ky - half) * w + (cx + kx - half)];
                        mu_a += wgt * va;
                        mu_b += wgt * vb;
                        aa += wgt * va * va;
                        bb += wgt * vb * vb;
                        ab += wgt * va * vb;
                    }
                }
                let var_a = aa - mu_a * mu_a;
                let var_b = bb - mu_b * mu_b;
                let cov = ab - mu_a * mu_b;
                let score = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                    / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                frame_sum += score;
                count += 1;
            }
        }
        total += frame_sum / count as f64;
    }
    Ok(total / a.t as f64)
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let mut k = vec![0.0; size * size];
    let mut sum = 0.0;
    for y in 0..size {
        for x in 0..size {
            let (dy, dx) = (y as f64 - half, x as f64 - half);
            let v = (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
            k[y * size + x] = v;
            sum += v;
        }
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}
