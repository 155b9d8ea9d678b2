//! Per-clip evaluation: encode, decode, score, time.

use std::time::Instant;

use anyhow::{bail, Result};
use serde::Serialize;

use vsci_net::checkpoint::Checkpoint;
use vsci_optics::{encode, MaskSet, NoiseModel, VideoCube};
use vsci_recon::{gap_tv_decode, psnr, ssim, GapTvConfig};

pub enum Decoder<'a> {
    GapTv(GapTvConfig),
    Network(&'a Checkpoint<f32>),
}

impl Decoder<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Decoder::GapTv(_) => "gap-tv",
            Decoder::Network(_) => "network",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalRow {
    pub name: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub decode_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub decoder: String,
    pub rows: Vec<EvalRow>,
    pub average: EvalRow,
}

/// Encodes the first T frames of every clip with the fixed masks, decodes,
/// and scores against the ground truth.
pub fn evaluate(
    clips: &[(String, VideoCube)],
    masks: &MaskSet,
    decoder: &Decoder,
    noise: &NoiseModel,
) -> Result<EvalReport> {
    if clips.is_empty() {
        bail!("nothing to evaluate");
    }
    let mut rows = Vec::with_capacity(clips.len());
    for (name, clip) in clips {
        if clip.h != masks.h || clip.w != masks.w || clip.t < masks.t {
            bail!(
                "clip '{name}' is {}x{}x{}, masks need at least {}x{}x{}",
                clip.t, clip.h, clip.w, masks.t, masks.h, masks.w
            );
        }
        let mut window = VideoCube::zeros(masks.t, clip.h, clip.w);
        for m in 0..masks.t {
            window.frame_mut(m).copy_from_slice(clip.frame(m));
        }
        let y = encode(&window, masks, noise)?;
        let started = Instant::now();
        let decoded = match decoder {
            Decoder::GapTv(cfg) => gap_tv_decode(&y, masks, cfg)?,
            Decoder::Network(ck) => vsci_recon::decode(&y, masks, ck)?,
        };
        let decode_seconds = started.elapsed().as_secs_f64();
        rows.push(EvalRow {
            name: name.clone(),
            psnr_db: psnr(&decoded, &window, 1.0)?,
            ssim: ssim(&decoded, &window)?,
            decode_seconds,
        });
    }
    let n = rows.len() as f64;
    let average = EvalRow {
        name: "average".into(),
        psnr_db: rows.iter().map(|r| r.psnr_db).sum::<f64>() / n,
        ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / n,
        decode_seconds: rows.iter().map(|r| r.decode_seconds).sum::<f64>() / n,
    };
    Ok(EvalReport {
        decoder: decoder.name().into(),
        rows,
        average,
    })
}

impl EvalReport {
    /// Human-readable table: one row per clip plus the average row.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<20} {:>10} {:>8} {:>12}\n",
            "clip", "psnr(db)", "ssim", "decode(s)"
        );
        for row in self.rows.iter().chain(std::iter::once(&self.average)) {
            out.push_str(&format!(
                "{:<20} {:>10.2} {:>8.4} {:>12.3}\n",
                row.name, row.psnr_db, row.ssim, row.decode_seconds
            ));
        }
        out
    }
}
