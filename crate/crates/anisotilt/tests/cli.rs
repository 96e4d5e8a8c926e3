//! End-to-end runs of the `anisotilt` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn anisotilt(args: &[&str]) -> (i32, Value, Output) {
    let out = Command::new(env!("CARGO_BIN_EXE_anisotilt")).args(args).output().unwrap();
    let report = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out.status.code().unwrap(), report, out)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn reference_level_check_passes() {
    let (code, v, _) = anisotilt(&["repro-table2", "--check"]);
    assert_eq!(code, 0);
    assert_eq!(v["outputs"]["failed"], 0);
    assert_eq!(v["outputs"]["checks"].as_array().unwrap().len(), 42);
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[optics]\naperture_diameter = 0.2\n").unwrap();
    let (code, v, _) = anisotilt(&["stats", "--level", "1", "--config", path(&cfg)]);
    assert_eq!(code, 2);
    assert_eq!(v["status"], "error");
    assert!(v["error"].as_str().unwrap().contains("bad.toml"));
}

#[test]
fn unknown_subcommand_exits_2() {
    let (code, v, out) = anisotilt(&["frobnicate"]);
    assert_eq!(code, 2);
    assert!(!out.stderr.is_empty());
    assert_eq!(v["status"], "error");
    assert_eq!(v["exit_code"], 2);
}

#[test]
fn synth_estimate_mitigate_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let seq = d.join("seq");
    let (code, v, _) = anisotilt(&[
        "--seed", "3", "synth", "--level", "3", "--scene-size", "96", "--frames", "12", "--out", path(&seq),
    ]);
    assert_eq!(code, 0, "{v}");
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(seq.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["frames"].as_array().unwrap().len(), 12);
    assert_eq!(manifest["bit_depth"], 16);

    let frames = format!("{}/frame_*.png", seq.display());
    let series = d.join("series.csv");
    let (code, v, _) = anisotilt(&[
        "estimate-r0", "--frames", &frames, "--window", "6", "--stride", "3", "--series-csv", path(&series),
    ]);
    assert_eq!(code, 0, "{v}");
    let r0 = v["outputs"]["r0_m"].as_f64().unwrap();
    assert!(r0 > 0.0 && r0.is_finite());
    assert_eq!(std::fs::read_to_string(&series).unwrap().lines().count(), 1 + 3);

    let restored = d.join("restored.png");
    let truth = seq.join("truth.png");
    let (code, v, _) = anisotilt(&[
        "mitigate", "--frames", &frames, "--r0", "0.0724", "--m", "5", "--s", "4", "--depth", "16",
        "--out", path(&restored), "--truth", path(&truth),
    ]);
    assert_eq!(code, 0, "{v}");
    let q = &v["outputs"]["quality"];
    assert!(q["restored"]["psnr_db"].as_f64().unwrap() > q["single_frame"]["psnr_db"].as_f64().unwrap());

    let (code, v, _) = anisotilt(&["eval", path(&truth), path(&truth)]);
    assert_eq!(code, 0);
    assert_eq!(v["outputs"]["psnr_db"], "inf");
    assert_eq!(v["outputs"]["ssim"], 1.0);
}

#[test]
fn same_seed_same_frames() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for (i, threads) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let (code, _, _) = anisotilt(&[
            "--seed", "11", "--threads", threads, "synth", "--level", "2", "--scene-size", "64", "--frames", "4",
            "--out", path(&out), "--format", "pgm",
        ]);
        assert_eq!(code, 0);
        bytes.push(std::fs::read(out.join("frame_0003.pgm")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}
