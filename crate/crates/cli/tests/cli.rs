use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn lamp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lamp")).current_dir(dir).env("RUST_LOG", "warn").args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = lamp(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn failure(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = lamp(dir, args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

/// 32x32 laminar dataset and a P=8, N_e=4 model trained on it.
fn fixture() -> (TempDir, PathBuf, PathBuf) {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--height", "32", "--width", "32", "--snapshots", "60", "--seed", "3", "--out-dir", "gen"]);
    ok(d, &["train", "--dataset", "gen/dataset.lampds", "--patch-size", "8", "--latent-dim", "4", "--out-dir", "tr"]);
    (tmp, PathBuf::from("gen/dataset.lampds"), PathBuf::from("tr/model.lampm"))
}

#[test]
fn indivisible_patch_size_is_a_usage_error() {
    let (tmp, ds, _) = fixture();
    let (code, err) = failure(
        tmp.path(),
        &["train", "--dataset", ds.to_str().unwrap(), "--patch-size", "7", "--latent-dim", "4", "--out-dir", "x"],
    );
    assert_eq!(code, 2);
    assert!(err.contains("does not divide"), "{err}");
    assert!(!tmp.path().join("x").exists(), "nothing written on validation failure");
}

#[test]
fn geometry_mismatch_is_a_usage_error() {
    let (tmp, _, model) = fixture();
    let d = tmp.path();
    ok(d, &["generate", "--height", "16", "--width", "16", "--snapshots", "20", "--out-dir", "small"]);
    let (code, err) = failure(
        d,
        &["compare", "--dataset", "small/dataset.lampds", "--model", model.to_str().unwrap(), "--out-dir", "x"],
    );
    assert_eq!(code, 2);
    assert!(err.contains("model expects"), "{err}");
}

#[test]
fn missing_and_malformed_files_are_io_errors() {
    let (tmp, ds, _) = fixture();
    let d = tmp.path();
    assert_eq!(failure(d, &["power-map", "--model", "nope.lampm", "--out-dir", "x"]).0, 3);
    // A dataset is not a model.
    let (code, err) = failure(d, &["power-map", "--model", ds.to_str().unwrap(), "--out-dir", "x"]);
    assert_eq!(code, 3);
    assert!(err.contains("malformed"), "{err}");
    std::fs::write(d.join("blocker"), b"").unwrap();
    let (code, _) = failure(d, &["generate", "--height", "16", "--width", "16", "--out-dir", "blocker/out"]);
    assert_eq!(code, 3);
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    let (tmp, ds, model) = fixture();
    let d = tmp.path();
    assert_eq!(failure(d, &["train", "--patch-size", "8"]).0, 2);
    assert_eq!(failure(d, &["sweep", "--dataset", "x", "--snr-db", "loud", "--out-dir", "x"]).0, 2);
    let (code, _) = failure(
        d,
        &[
            "reconstruct",
            "--dataset",
            ds.to_str().unwrap(),
            "--model",
            model.to_str().unwrap(),
            "--coverage",
            "0",
            "--out-dir",
            "x",
        ],
    );
    assert_eq!(code, 2);
    let (code, err) = failure(d, &["gappy", "--dataset", ds.to_str().unwrap(), "--patch-size", "8", "--out-dir", "x"]);
    assert_eq!(code, 2);
    assert!(err.contains("--rank"), "{err}");
}

#[test]
fn outputs_and_manifests_are_written() {
    let (tmp, ds, model) = fixture();
    let d = tmp.path();
    let (ds, model) = (ds.to_str().unwrap(), model.to_str().unwrap());
    ok(d, &["power-map", "--model", model, "--out-dir", "pm"]);
    let csv = std::fs::read_to_string(d.join("pm/power_map.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 16);
    ok(
        d,
        &[
            "compare",
            "--dataset",
            ds,
            "--model",
            model,
            "--sensors-from",
            "pm/power_map.csv",
            "--coverage",
            "0.25",
            "--out-dir",
            "cmp",
        ],
    );
    let csv = std::fs::read_to_string(d.join("cmp/compare.csv")).unwrap();
    assert!(csv.starts_with("arrangement,mask_seed,unmasked,lamp_loss,gappy_loss,ratio\n"));
    assert!(csv.lines().last().unwrap().starts_with("median,"));
    let ppm = std::fs::read(d.join("cmp/compare.ppm")).unwrap();
    // truth | input | lamp | gappy with 1-pixel separators.
    let header = format!("P6\n{} 32\n255\n", 4 * 32 + 3);
    assert!(ppm.starts_with(header.as_bytes()));
    assert_eq!(ppm.len(), header.len() + (4 * 32 + 3) * 32 * 3);

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("cmp/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["run"]["command"], "compare");
    assert_eq!(manifest["outputs"], serde_json::json!(["compare.csv", "compare.ppm"]));
    assert!(manifest["diagnostics"]["ratio"].as_f64().unwrap() > 0.0);
    assert!(manifest["diagnostics"]["image_range"].is_array());
}

#[test]
fn replay_reproduces_outputs() {
    let (tmp, ds, _) = fixture();
    let d = tmp.path();
    let ds = ds.to_str().unwrap();
    ok(
        d,
        &[
            "sweep",
            "--dataset",
            ds,
            "--patch-sizes",
            "8,16",
            "--latent-dims",
            "2,4",
            "--snr-db",
            "inf,20",
            "--arrangements",
            "3",
            "--out-dir",
            "sw",
        ],
    );
    ok(d, &["replay", "--manifest", "sw/manifest.json", "--out-dir", "sw2"]);
    for name in ["sweep.csv", "sweep_snrinf_cov0.1.ppm", "sweep_snr20_cov0.1.ppm"] {
        assert_eq!(
            std::fs::read(d.join("sw").join(name)).unwrap(),
            std::fs::read(d.join("sw2").join(name)).unwrap(),
            "{name}"
        );
    }
    // Replaying a replay target's manifest works the same way.
    ok(d, &["replay", "--manifest", "sw2/manifest.json", "--out-dir", "sw3"]);
    assert_eq!(std::fs::read(d.join("sw/sweep.csv")).unwrap(), std::fs::read(d.join("sw3/sweep.csv")).unwrap());
}
