//! Exercises the `vsci` binary end to end: subcommand wiring, exit codes,
//! output atomicity, and pipeline determinism.

use std::path::Path;
use std::process::{Command, Output};

fn vsci(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vsci"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn flops_prints_the_pinned_totals() {
    let dir = tempfile::tempdir().unwrap();
    let out = vsci(
        &["flops", "--h", "32", "--w", "32", "--t", "8", "--c", "24", "--g", "4", "--s", "4"],
        dir.path(),
    );
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("bstf = 11534336"), "{text}");
    assert!(text.contains("lba  = 4194304"));
    assert!(text.contains("gta  = 3145728"));
}

#[test]
fn gen_masks_encode_decode_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(vsci(
        &["gen-masks", "--scheme", "uss", "--t", "8", "--h", "64", "--w", "64", "--seed", "7", "--out", "m.stns"],
        d
    )
    .status
    .success());
    assert!(vsci(
        &["synth", "--kind", "moving-square", "--t", "8", "--h", "64", "--w", "64", "--seed", "1", "--out", "scene.stns"],
        d
    )
    .status
    .success());
    assert!(vsci(
        &["encode", "--video", "scene.stns", "--masks", "m.stns", "--out", "y.stns"],
        d
    )
    .status
    .success());
    let out = vsci(
        &[
            "decode", "--measurement", "y.stns", "--masks", "m.stns", "--gap-tv",
            "--iterations", "20", "--out", "rec.stns", "--truth", "scene.stns",
        ],
        d,
    );
    assert!(out.status.success());
    assert!(stdout(&out).contains("psnr="));
    assert!(d.join("rec.stns").exists());
    // every subcommand with an output leaves a run record beside it
    assert!(d.join("rec.stns.run.json").exists());
    let record: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("rec.stns.run.json")).unwrap()).unwrap();
    assert_eq!(record["command"], "decode");
    assert!(record["results"]["psnr_db"].as_f64().unwrap() > 5.0);
}

#[test]
fn missing_required_flag_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = vsci(
        &["decode", "--measurement", "y.stns", "--gap-tv", "--out", "rec.stns"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "missing --masks must exit 2");

    let out = vsci(&["decode", "--frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2), "unknown flag must exit 2");
}

#[test]
fn runtime_errors_exit_one_with_single_line_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = vsci(
        &["encode", "--video", "absent.stns", "--masks", "m.stns", "--out", "y.stns"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim().lines().count(), 1, "stderr: {err}");
    assert!(err.starts_with("error:"));
}

#[test]
fn failed_runs_leave_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // a corrupt measurement file: decode must fail without creating out
    std::fs::write(d.join("y.stns"), b"STNSgarbage").unwrap();
    assert!(vsci(
        &["gen-masks", "--scheme", "uss", "--t", "2", "--h", "8", "--w", "8", "--out", "m.stns"],
        d
    )
    .status
    .success());
    let out = vsci(
        &["decode", "--measurement", "y.stns", "--masks", "m.stns", "--gap-tv", "--out", "rec.stns"],
        d,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("rec.stns").exists());
    // no stray temp files either
    let leftovers: Vec<_> = std::fs::read_dir(d)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.contains(".tmp-"))
        .collect();
    assert!(leftovers.is_empty(), "temp files left behind: {leftovers:?}");
}

#[test]
fn pipeline_is_byte_identical_across_runs() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for d in [dir_a.path(), dir_b.path()] {
        assert!(vsci(
            &["gen-masks", "--scheme", "uss", "--t", "2", "--h", "8", "--w", "8", "--seed", "3", "--out", "m.stns"],
            d
        )
        .status
        .success());
        assert!(vsci(
            &["synth", "--kind", "bouncing-dot", "--t", "2", "--h", "8", "--w", "8", "--seed", "5", "--out", "scene.stns"],
            d
        )
        .status
        .success());
        assert!(vsci(
            &["encode", "--video", "scene.stns", "--masks", "m.stns", "--noise-sigma", "0.01", "--noise-seed", "11", "--out", "y.stns"],
            d
        )
        .status
        .success());
        assert!(vsci(
            &[
                "train", "--synth", "moving-square", "--masks", "m.stns", "--steps", "3",
                "--lr", "1e-3", "--seed", "4", "--crop", "8", "--channels", "6", "--blocks", "1",
                "--window", "2", "--grid", "2", "--heads", "1", "--out", "ck.bstc",
            ],
            d
        )
        .status
        .success());
    }
    for file in ["m.stns", "m.stns.meta", "scene.stns", "y.stns", "ck.bstc"] {
        let a = std::fs::read(dir_a.path().join(file)).unwrap();
        let b = std::fs::read(dir_b.path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between runs");
    }
}

#[test]
fn quantized_encode_exports_png() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(vsci(
        &["gen-masks", "--scheme", "uss", "--t", "4", "--h", "16", "--w", "16", "--out", "m.stns"],
        d
    )
    .status
    .success());
    assert!(vsci(
        &["synth", "--kind", "drifting-gradient", "--t", "4", "--h", "16", "--w", "16", "--out", "scene.stns"],
        d
    )
    .status
    .success());
    assert!(vsci(
        &[
            "encode", "--video", "scene.stns", "--masks", "m.stns", "--quantize",
            "--bits", "8", "--gain", "1.0", "--png", "y.png", "--out", "y.stns",
        ],
        d
    )
    .status
    .success());
    let img = image::open(d.join("y.png")).unwrap();
    assert_eq!((img.width(), img.height()), (16, 16));
}
