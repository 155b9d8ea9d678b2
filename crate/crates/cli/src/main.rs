use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand};
use serde_json::{json, Value};

use vsci_cli::dataset::{load_clip, save_frames_png, DatasetManifest};
use vsci_cli::dynrange::{dynrange_experiment, DynRangeSetup};
use vsci_cli::evaluate::{evaluate, Decoder};
use vsci_cli::record::{default_record_path, write_run_record, RunTimer};
use vsci_cli::synth::{synth_scene, SceneKind};
use vsci_cli::train::{train, TrainConfig};

use vsci_net::checkpoint;
use vsci_net::{count_flops, BranchKind, BranchSet, NetworkConfig};
use vsci_optics::{
    dequantize, encode, quantize, MaskScheme, MaskSet, Measurement, NoiseModel, QuantSpec,
    VideoCube,
};
use vsci_recon::{gap_tv_decode, psnr, ssim, GapTvConfig};

/// Video snapshot compressive imaging toolkit: mask generation, the optical
/// forward model, learned and classical decoders, and a desk-scale training
/// loop.
#[derive(Parser)]
#[command(name = "vsci", version, about, max_term_width = 100)]
struct Cli {
    /// Worker threads for data loading. The numeric pipeline itself is
    /// single-threaded and bitwise deterministic regardless of this value.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Where to write the machine-readable run record. Defaults to
    /// `<out>.run.json` next to the primary output when one exists.
    #[arg(long, global = true)]
    record: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an RS or USS modulation mask set.
    GenMasks(GenMasksArgs),
    /// Render a synthetic scene to an STNS cube (and optionally PNG frames).
    Synth(SynthArgs),
    /// Apply the forward model: modulate, integrate, optionally add noise
    /// and quantize.
    Encode(EncodeArgs),
    /// Reconstruct frames from a measurement with a checkpoint or GAP-TV.
    Decode(DecodeArgs),
    /// Train the reconstruction network on clips or synthetic scenes.
    Train(TrainArgs),
    /// Evaluate a decoder over a set of clips.
    Eval(EvalArgs),
    /// Print the closed-form attention complexity report.
    Flops(FlopsArgs),
    /// Compare RS and USS under an exposure-gain ladder.
    Dynrange(DynrangeArgs),
}

#[derive(Args)]
struct GenMasksArgs {
    /// Sampling scheme: rs | uss.
    #[arg(long)]
    scheme: String,
    #[arg(long)]
    t: usize,
    #[arg(long)]
    h: usize,
    #[arg(long)]
    w: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bernoulli density for RS masks.
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    /// Gaussian blur sigma applied after generation (degraded masks).
    #[arg(long, default_value_t = 0.0)]
    blur: f64,
    /// Subpixel (dy,dx) shift applied after generation.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    shift: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// moving-square | drifting-gradient | bouncing-dot.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    t: usize,
    #[arg(long)]
    h: usize,
    #[arg(long)]
    w: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the frames as PNGs into this directory.
    #[arg(long)]
    png_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    /// Input video cube (STNS [T,H,W]).
    #[arg(long)]
    video: PathBuf,
    #[arg(long)]
    masks: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Gaussian measurement-noise sigma (0 disables noise).
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    /// Quantize to ADC codes after encoding.
    #[arg(long)]
    quantize: bool,
    #[arg(long, default_value_t = 8)]
    bits: u32,
    #[arg(long, default_value_t = 1.0)]
    full_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    gain: f64,
    /// PNG preview of the quantized measurement (8-bit only).
    #[arg(long)]
    png: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("method").required(true).args(["checkpoint", "gap_tv"])))]
struct DecodeArgs {
    /// Measurement (STNS [H,W]).
    #[arg(long)]
    measurement: PathBuf,
    #[arg(long)]
    masks: PathBuf,
    /// Decode with a trained checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Decode with the GAP-TV baseline.
    #[arg(long)]
    gap_tv: bool,
    #[arg(long, default_value_t = 60)]
    iterations: usize,
    #[arg(long, default_value_t = 0.1)]
    tv_weight: f64,
    #[arg(long, default_value_t = 5)]
    tv_steps: usize,
    /// Disable the accelerated measurement update.
    #[arg(long)]
    no_accel: bool,
    /// The quantization the measurement went through, as `bits,full_scale,gain`
    /// (quantized inputs are mapped back to analog units before decoding).
    #[arg(long, value_delimiter = ',', num_args = 3)]
    dequantize: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth cube; when given, PSNR/SSIM are printed and recorded.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["data", "synth"])))]
struct TrainArgs {
    /// Dataset root: one directory of PNG frames per clip.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma list of synthetic scene kinds, e.g. `moving-square,drifting-gradient`.
    #[arg(long)]
    synth: Option<String>,
    /// Extents of generated synthetic clips (defaults to the mask extents).
    #[arg(long)]
    synth_frames: Option<usize>,
    #[arg(long)]
    masks: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Flat key=value config file; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Comma list of steps with 10x learning-rate drops.
    #[arg(long, value_delimiter = ',')]
    lr_decay: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    crop: Option<usize>,
    /// Enable random cropping (otherwise center crop).
    #[arg(long)]
    random_crop: bool,
    /// Enable random horizontal flips.
    #[arg(long)]
    flip: bool,
    /// Enable random rescaling from {0.75, 1.0, 1.25}.
    #[arg(long)]
    rescale: bool,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    /// Disable one attention branch (lba | gsa | gta), as in the ablations.
    #[arg(long)]
    disable_branch: Option<String>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("method").required(true).args(["checkpoint", "gap_tv"])))]
#[command(group(ArgGroup::new("source").required(true).args(["data", "synth"])))]
struct EvalArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    synth: Option<String>,
    #[arg(long, default_value_t = 0)]
    synth_seed: u64,
    #[arg(long)]
    masks: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    gap_tv: bool,
    #[arg(long, default_value_t = 60)]
    iterations: usize,
    #[arg(long, default_value_t = 0.1)]
    tv_weight: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    /// Write the machine-readable report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FlopsArgs {
    #[arg(long)]
    h: usize,
    #[arg(long)]
    w: usize,
    #[arg(long)]
    t: usize,
    #[arg(long)]
    c: usize,
    #[arg(long)]
    g: usize,
    #[arg(long)]
    s: usize,
}

#[derive(Args)]
struct DynrangeArgs {
    /// Scene source: `synth:<kind>` or a path to an STNS cube.
    #[arg(long, default_value = "synth:moving-square")]
    scene: String,
    #[arg(long, default_value_t = 10)]
    t: usize,
    #[arg(long, default_value_t = 32)]
    h: usize,
    #[arg(long, default_value_t = 32)]
    w: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ascending exposure gains to sweep.
    #[arg(long, value_delimiter = ',', required = true)]
    gains: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    bits: u32,
    #[arg(long, default_value_t = 1.0)]
    full_scale: f64,
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    #[arg(long, default_value_t = 60)]
    iterations: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads.max(1);
    let (timer, results, out_for_record): (RunTimer, Value, Option<PathBuf>) = match cli.command {
        Command::GenMasks(a) => {
            let timer = RunTimer::start("gen-masks");
            let r = cmd_gen_masks(&a)?;
            (timer, r, Some(a.out))
        }
        Command::Synth(a) => {
            let timer = RunTimer::start("synth");
            let r = cmd_synth(&a)?;
            (timer, r, Some(a.out))
        }
        Command::Encode(a) => {
            let timer = RunTimer::start("encode");
            let r = cmd_encode(&a)?;
            (timer, r, Some(a.out))
        }
        Command::Decode(a) => {
            let timer = RunTimer::start("decode");
            let r = cmd_decode(&a)?;
            (timer, r, Some(a.out))
        }
        Command::Train(a) => {
            let timer = RunTimer::start("train");
            let r = cmd_train(&a, threads)?;
            (timer, r, Some(a.out))
        }
        Command::Eval(a) => {
            let timer = RunTimer::start("eval");
            let r = cmd_eval(&a, threads)?;
            let out = a.out.clone();
            (timer, r, out)
        }
        Command::Flops(a) => {
            let timer = RunTimer::start("flops");
            let r = cmd_flops(&a)?;
            (timer, r, None)
        }
        Command::Dynrange(a) => {
            let timer = RunTimer::start("dynrange");
            let r = cmd_dynrange(&a)?;
            let out = a.out.clone();
            (timer, r, out)
        }
    };
    let record_path = cli
        .record
        .or_else(|| out_for_record.as_deref().map(default_record_path));
    if let Some(path) = record_path {
        write_run_record(&path, &timer.record(results))?;
    }
    Ok(())
}

fn cmd_gen_masks(a: &GenMasksArgs) -> Result<Value> {
    let scheme = MaskScheme::parse(&a.scheme)
        .ok_or_else(|| anyhow!("unknown scheme '{}' (expected rs or uss)", a.scheme))?;
    let mut masks = match scheme {
        MaskScheme::Rs => MaskSet::gen_rs(a.t, a.h, a.w, a.density, a.seed)?,
        MaskScheme::Uss => MaskSet::gen_uss(a.t, a.h, a.w, a.seed)?,
    };
    let shift = a.shift.as_ref().map(|s| (s[0], s[1])).unwrap_or((0.0, 0.0));
    if a.blur > 0.0 || shift != (0.0, 0.0) {
        masks = masks.degrade(a.blur, shift)?;
    }
    let report = masks.validate();
    if !report.pass {
        bail!("generated masks failed validation ({} violations)", report.violations);
    }
    masks.save(&a.out)?;
    println!(
        "wrote {} masks {}x{}x{} (seed {}) to {}",
        masks.scheme, masks.t, masks.h, masks.w, masks.seed, a.out.display()
    );
    Ok(json!({
        "scheme": masks.scheme.to_string(),
        "t": masks.t, "h": masks.h, "w": masks.w,
        "seed": masks.seed,
        "ideal": masks.ideal,
        "per_frame_fill": report.per_frame_fill,
    }))
}

fn cmd_synth(a: &SynthArgs) -> Result<Value> {
    let kind = SceneKind::parse(&a.kind)?;
    let cube = synth_scene(kind, a.t, a.h, a.w, a.seed)?;
    cube.save(&a.out)?;
    if let Some(dir) = &a.png_dir {
        save_frames_png(&cube, dir)?;
    }
    println!("wrote {} scene {}x{}x{} to {}", a.kind, a.t, a.h, a.w, a.out.display());
    Ok(json!({"kind": a.kind, "t": a.t, "h": a.h, "w": a.w, "seed": a.seed}))
}

fn cmd_encode(a: &EncodeArgs) -> Result<Value> {
    let video = VideoCube::load(&a.video).context("loading video cube")?;
    let masks = MaskSet::load(&a.masks).context("loading masks")?;
    let noise = if a.noise_sigma > 0.0 {
        NoiseModel::Gaussian {
            sigma: a.noise_sigma,
            seed: a.noise_seed,
        }
    } else {
        NoiseModel::None
    };
    let analog = encode(&video, &masks, &noise)?;
    let (saved, saturation) = if a.quantize {
        let q = QuantSpec::new(a.bits, a.full_scale, a.gain)?;
        let codes = quantize(&analog, &q)?;
        if let Some(png) = &a.png {
            codes.save_png(png)?;
        }
        let sat = codes.saturation_fraction;
        codes.save(&a.out)?;
        (true, sat)
    } else {
        if a.png.is_some() {
            bail!("--png requires --quantize (PNG export is 8-bit)");
        }
        analog.save(&a.out)?;
        (false, None)
    };
    println!(
        "encoded {}x{} measurement{} to {}",
        masks.h,
        masks.w,
        if saved { " (quantized)" } else { "" },
        a.out.display()
    );
    Ok(json!({
        "quantized": a.quantize,
        "noise_sigma": a.noise_sigma,
        "noise_seed": a.noise_seed,
        "saturation_fraction": saturation,
    }))
}

fn cmd_decode(a: &DecodeArgs) -> Result<Value> {
    let masks = MaskSet::load(&a.masks).context("loading masks")?;
    let mut y = Measurement::load(&a.measurement).context("loading measurement")?;
    if let Some(dq) = &a.dequantize {
        let q = QuantSpec::new(dq[0] as u32, dq[1], dq[2])?;
        y = dequantize(&y, &q)?;
    }
    let decoded = if let Some(ck_path) = &a.checkpoint {
        let ck = checkpoint::load::<f32>(ck_path).context("loading checkpoint")?;
        vsci_recon::decode(&y, &masks, &ck)?
    } else {
        let cfg = GapTvConfig {
            iterations: a.iterations,
            tv_weight: a.tv_weight,
            tv_inner_steps: a.tv_steps,
            accelerate: !a.no_accel,
        };
        gap_tv_decode(&y, &masks, &cfg)?
    };
    decoded.save(&a.out)?;
    let mut results = json!({
        "method": if a.checkpoint.is_some() { "network" } else { "gap-tv" },
        "t": decoded.t, "h": decoded.h, "w": decoded.w,
    });
    if let Some(truth_path) = &a.truth {
        let truth = VideoCube::load(truth_path)?;
        let p = psnr(&decoded, &truth, 1.0)?;
        let s = ssim(&decoded, &truth)?;
        println!("psnr={p:.2}dB ssim={s:.4}");
        results["psnr_db"] = json!(p);
        results["ssim"] = json!(s);
    }
    println!("wrote reconstruction to {}", a.out.display());
    Ok(results)
}

fn parse_flat_config(path: &Path, cfg: &mut TrainConfig) -> Result<()> {
    for line in std::fs::read_to_string(path)?.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line is not key=value: '{line}'"))?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "steps" => cfg.steps = v.parse()?,
            "batch" => cfg.batch_size = v.parse()?,
            "lr" => cfg.initial_lr = v.parse()?,
            "seed" => cfg.seed = v.parse()?,
            "crop" => cfg.augment.crop = v.parse()?,
            "random_crop" => cfg.augment.random_crop = v.parse()?,
            "flip" => cfg.augment.flip = v.parse()?,
            "rescale" => cfg.augment.rescale = v.parse()?,
            "beta1" => cfg.beta1 = v.parse()?,
            "beta2" => cfg.beta2 = v.parse()?,
            "epsilon" => cfg.epsilon = v.parse()?,
            "lr_decay" => {
                cfg.lr_decay_steps = v
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<std::result::Result<_, _>>()?
            }
            other => bail!("unknown config key '{other}'"),
        }
    }
    Ok(())
}

fn load_clips(
    data: &Option<PathBuf>,
    synth: &Option<String>,
    masks: &MaskSet,
    synth_frames: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<(String, VideoCube)>> {
    if let Some(root) = data {
        let manifest = DatasetManifest::scan(root, "train", masks.t)?;
        let mut clips = Vec::new();
        for entry in &manifest.clips {
            clips.push((entry.name.clone(), load_clip(entry, threads)?));
        }
        Ok(clips)
    } else {
        let spec = synth.as_ref().expect("clap group guarantees a source");
        let mut clips = Vec::new();
        for (i, kind_str) in spec.split(',').enumerate() {
            let kind = SceneKind::parse(kind_str.trim())?;
            let cube = synth_scene(kind, synth_frames, masks.h, masks.w, seed + i as u64)?;
            clips.push((format!("{}-{}", kind.name(), i), cube));
        }
        Ok(clips)
    }
}

fn cmd_train(a: &TrainArgs, threads: usize) -> Result<Value> {
    let masks = MaskSet::load(&a.masks).context("loading masks")?;

    let mut cfg = TrainConfig::toy(masks.h);
    if let Some(path) = &a.config {
        parse_flat_config(path, &mut cfg)?;
    }
    if let Some(v) = a.steps {
        cfg.steps = v;
    }
    if let Some(v) = a.batch {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.initial_lr = v;
    }
    if let Some(v) = &a.lr_decay {
        cfg.lr_decay_steps = v.clone();
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.crop {
        cfg.augment.crop = v;
    }
    cfg.augment.random_crop |= a.random_crop;
    cfg.augment.flip |= a.flip;
    cfg.augment.rescale |= a.rescale;

    let mut branches = BranchSet::all();
    if let Some(name) = &a.disable_branch {
        branches = match name.as_str() {
            "lba" => BranchSet::without(BranchKind::LocalBlock),
            "gsa" => BranchSet::without(BranchKind::GlobalSparse),
            "gta" => BranchSet::without(BranchKind::GlobalTemporal),
            other => bail!("unknown branch '{other}'"),
        };
    }
    let toy = NetworkConfig::toy();
    let net_config = NetworkConfig {
        t: masks.t,
        h: cfg.augment.crop,
        w: cfg.augment.crop,
        channels: a.channels.unwrap_or(toy.channels),
        blocks: a.blocks.unwrap_or(toy.blocks),
        window: a.window.unwrap_or(toy.window),
        grid: a.grid.unwrap_or(toy.grid),
        heads: a.heads.unwrap_or(toy.heads),
        leaky_slope: toy.leaky_slope,
        ffn_expansion: toy.ffn_expansion,
        branches,
    };

    let clips = load_clips(&a.data, &a.synth, &masks, a.synth_frames.unwrap_or(masks.t), cfg.seed, threads)?;
    let cubes: Vec<VideoCube> = clips.iter().map(|(_, c)| c.clone()).collect();
    println!(
        "training {} steps on {} clips ({} parameters)...",
        cfg.steps,
        cubes.len(),
        vsci_net::param_layout(&net_config)
            .iter()
            .map(|d| d.shape.iter().product::<usize>())
            .sum::<usize>()
    );
    let outcome = train(&cubes, &masks, &net_config, &cfg)?;
    checkpoint::save(&outcome.checkpoint, &a.out)?;
    let h = &outcome.checkpoint.loss_history;
    if outcome.diverged {
        eprintln!(
            "training diverged at step {}; wrote the last good checkpoint",
            outcome.checkpoint.step
        );
    } else if let (Some(first), Some(last)) = (h.first(), h.last()) {
        println!("loss {first:.6} -> {last:.6} over {} steps", h.len());
    }
    println!("wrote checkpoint to {}", a.out.display());
    Ok(json!({
        "steps_run": h.len(),
        "diverged": outcome.diverged,
        "seed": cfg.seed,
        "initial_loss": h.first(),
        "final_loss": h.last(),
        "branches": net_config.branches.to_string(),
    }))
}

fn cmd_eval(a: &EvalArgs, threads: usize) -> Result<Value> {
    let masks = MaskSet::load(&a.masks).context("loading masks")?;
    let clips = load_clips(&a.data, &a.synth, &masks, masks.t, a.synth_seed, threads)?;
    let noise = if a.noise_sigma > 0.0 {
        NoiseModel::Gaussian {
            sigma: a.noise_sigma,
            seed: a.noise_seed,
        }
    } else {
        NoiseModel::None
    };
    let loaded;
    let decoder = if let Some(path) = &a.checkpoint {
        loaded = checkpoint::load::<f32>(path).context("loading checkpoint")?;
        Decoder::Network(&loaded)
    } else {
        Decoder::GapTv(GapTvConfig {
            iterations: a.iterations,
            tv_weight: a.tv_weight,
            ..GapTvConfig::default()
        })
    };
    let report = evaluate(&clips, &masks, &decoder, &noise)?;
    print!("{}", report.table());
    let value = serde_json::to_value(&report)?;
    if let Some(out) = &a.out {
        vsci_tensor::stns::atomic_write(out, serde_json::to_string_pretty(&report)?.as_bytes())?;
        println!("wrote metrics to {}", out.display());
    }
    Ok(value)
}

fn cmd_flops(a: &FlopsArgs) -> Result<Value> {
    let mut cfg = NetworkConfig::toy();
    cfg.t = a.t;
    cfg.h = a.h;
    cfg.w = a.w;
    cfg.channels = a.c;
    cfg.grid = a.g;
    cfg.window = a.s;
    let report = count_flops(&cfg)?;
    println!("lba  = {}", report.lba);
    println!("gsa  = {}", report.gsa);
    println!("gta  = {}", report.gta);
    println!("bstf = {}", report.bstf);
    println!("gmsa = {}", report.gmsa);
    Ok(json!({
        "lba": report.lba.to_string(),
        "gsa": report.gsa.to_string(),
        "gta": report.gta.to_string(),
        "bstf": report.bstf.to_string(),
        "gmsa": report.gmsa.to_string(),
    }))
}

fn cmd_dynrange(a: &DynrangeArgs) -> Result<Value> {
    let scene = if let Some(kind) = a.scene.strip_prefix("synth:") {
        synth_scene(SceneKind::parse(kind)?, a.t, a.h, a.w, a.seed)?
    } else {
        VideoCube::load(Path::new(&a.scene))?
    };
    let setup = DynRangeSetup {
        bits: a.bits,
        full_scale: a.full_scale,
        rs_density: a.density,
        mask_seed: a.seed,
        gap: GapTvConfig {
            iterations: a.iterations,
            ..GapTvConfig::default()
        },
    };
    let report = dynrange_experiment(&scene, &a.gains, &setup)?;
    print!("{}", report.table());
    if let Some(gain) = report.crossover_gain(3.0) {
        println!("uss leads rs by >= 3 db from gain {gain}");
    }
    let value = serde_json::to_value(&report)?;
    if let Some(out) = &a.out {
        vsci_tensor::stns::atomic_write(out, serde_json::to_string_pretty(&report)?.as_bytes())?;
        println!("wrote report to {}", out.display());
    }
    Ok(value)
}
