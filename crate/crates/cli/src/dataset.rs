//! Clip ingestion: a dataset root holds one directory per clip, each with
//! lexicographically ordered grayscale PNG frames. RGB input converts to
//! luma with the Rec. 601 weights.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use image::DynamicImage;
use vsci_optics::VideoCube;

#[derive(Debug, Clone)]
pub struct ClipEntry {
    pub name: String,
    pub frames: Vec<PathBuf>,
    pub h: usize,
    pub w: usize,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub split: String,
    pub clips: Vec<ClipEntry>,
}

impl DatasetManifest {
    /// Scans `root` for clip directories with at least `min_frames` PNG
    /// frames of uniform extents.
    pub fn scan(root: &Path, split: &str, min_frames: usize) -> Result<Self> {
        let mut clips = Vec::new();
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
            .with_context(|| format!("reading dataset root {}", root.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for dir in dirs {
            let mut frames: Vec<PathBuf> = std::fs::read_dir(&dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().map(|e| e == "png").unwrap_or(false))
                .collect();
            frames.sort();
            if frames.len() < min_frames {
                bail!(
                    "clip {} holds {} frames, need at least {min_frames}",
                    dir.display(),
                    frames.len()
                );
            }
            let (first, h, w) = load_frame_png(&frames[0])?;
            drop(first);
            clips.push(ClipEntry {
                name: dir
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                frames,
                h,
                w,
            });
        }
        if clips.is_empty() {
            bail!("no clip directories under {}", root.display());
        }
        Ok(DatasetManifest {
            split: split.to_string(),
            clips,
        })
    }
}

/// Decodes one frame to unit-range grayscale. RGB converts via the Rec. 601
/// luma weights; alpha is ignored.
pub fn load_frame_png(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let img = image::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (data, h, w) = match img {
        DynamicImage::ImageLuma8(g) => {
            let (w, h) = (g.width() as usize, g.height() as usize);
            (g.into_raw().iter().map(|&v| v as f64 / 255.0).collect(), h, w)
        }
        DynamicImage::ImageLuma16(g) => {
            let (w, h) = (g.width() as usize, g.height() as usize);
            (
                g.into_raw().iter().map(|&v| v as f64 / 65535.0).collect(),
                h,
                w,
            )
        }
        other => {
            let rgb = other.into_rgb8();
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            let data = rgb
                .pixels()
                .map(|p| {
                    (0.299 * p.0[0] as f64 + 0.587 * p.0[1] as f64 + 0.114 * p.0[2] as f64) / 255.0
                })
                .collect();
            (data, h, w)
        }
    };
    Ok((data, h, w))
}

/// Loads a clip; frames decode on `threads` workers but assemble in order,
/// so the result does not depend on the thread count.
pub fn load_clip(entry: &ClipEntry, threads: usize) -> Result<VideoCube> {
    let n = entry.frames.len();
    let mut decoded: Vec<Option<Vec<f64>>> = vec![None; n];
    let threads = threads.max(1).min(n);
    if threads == 1 {
        for (i, path) in entry.frames.iter().enumerate() {
            let (data, h, w) = load_frame_png(path)?;
            if (h, w) != (entry.h, entry.w) {
                bail!(
                    "frame {} is {}x{}, clip is {}x{}",
                    path.display(),
                    h,
                    w,
                    entry.h,
                    entry.w
                );
            }
            decoded[i] = Some(data);
        }
    } else {
        let chunk = n.div_ceil(threads);
        let results: Vec<Result<Vec<(usize, Vec<f64>)>>> = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for (c, frame_chunk) in entry.frames.chunks(chunk).enumerate() {
                let base = c * chunk;
                handles.push(scope.spawn(move || {
                    let mut out = Vec::with_capacity(frame_chunk.len());
                    for (off, path) in frame_chunk.iter().enumerate() {
                        let (data, h, w) = load_frame_png(path)?;
                        if (h, w) != (entry.h, entry.w) {
                            bail!(
                                "frame {} is {}x{}, clip is {}x{}",
                                path.display(),
                                h,
                                w,
                                entry.h,
                                entry.w
                            );
                        }
                        out.push((base + off, data));
                    }
                    Ok(out)
                }));
            }
            handles.into_iter().map(|h| h.join().expect("no panics")).collect()
        });
        for r in results {
            for (i, data) in r? {
                decoded[i] = Some(data);
            }
        }
    }
    let mut cube = VideoCube::zeros(n, entry.h, entry.w);
    for (i, data) in decoded.into_iter().enumerate() {
        cube.frame_mut(i)
            .copy_from_slice(&data.expect("all frames decoded"));
    }
    Ok(cube)
}

/// Writes each frame as an 8-bit grayscale PNG `frame_000.png`, ...
pub fn save_frames_png(cube: &VideoCube, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for m in 0..cube.t {
        let bytes: Vec<u8> = cube
            .frame(m)
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let img = image::GrayImage::from_raw(cube.w as u32, cube.h as u32, bytes)
            .expect("buffer matches extents");
        img.save(dir.join(format!("frame_{m:03}.png")))?;
    }
    Ok(())
}
