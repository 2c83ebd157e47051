use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use transporter_cli::RunManifest;
use transporter_core::ring::read_train;

fn transporter(dir: &Path, args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_transporter"));
    cmd.args(args).current_dir(dir).env_remove("TRANSPORTER_SEED");
    if let Some(s) = env_seed {
        cmd.env("TRANSPORTER_SEED", s);
    }
    cmd.output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = transporter(dir, args, None);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn manifest(dir: &Path) -> RunManifest {
    RunManifest::load(&dir.join("manifest.json")).unwrap()
}

fn small_dataset(dir: &Path, name: &str) {
    fs::write(dir.join("ds.json"), r#"{"n_train": 64, "n_val": 16, "n_test": 16}"#).unwrap();
    ok(dir, &["gen-dataset", "--config", "ds.json", "--out-dir", name]);
}

#[test]
fn unknown_config_key_exits_2() {
    let t = tempfile::tempdir().unwrap();
    fs::write(t.path().join("c.json"), r#"{"n_stages": 16, "colour": "red"}"#).unwrap();
    let out = transporter(t.path(), &["encode", "--config", "c.json"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn malformed_json_and_bad_values_exit_2() {
    let t = tempfile::tempdir().unwrap();
    fs::write(t.path().join("c.json"), "{ not json").unwrap();
    assert_eq!(transporter(t.path(), &["ring-demo", "--config", "c.json"], None).status.code(), Some(2));
    fs::write(t.path().join("neg.json"), r#"{"n_train": 0}"#).unwrap();
    assert_eq!(transporter(t.path(), &["gen-dataset", "--config", "neg.json"], None).status.code(), Some(2));
    assert_eq!(transporter(t.path(), &["ring-demo", "--stopper", "64"], None).status.code(), Some(2));
    assert_eq!(transporter(t.path(), &["encode", "--threads", "0"], None).status.code(), Some(2));
    assert_eq!(transporter(t.path(), &["encode"], Some("not-a-number")).status.code(), Some(2));
}

#[test]
fn non_finite_training_loss_exits_3() {
    let t = tempfile::tempdir().unwrap();
    small_dataset(t.path(), "ds");
    let path = t.path().join("ds/train.tsv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let bits = lines[1].split('\t').nth(1).unwrap().to_string();
    lines[1] = format!("inf\t{bits}");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    fs::write(
        t.path().join("tr.json"),
        r#"{"dataset_dir": "ds", "arch": {"n_hidden": 4}, "train": {"epochs": 1}}"#,
    )
    .unwrap();
    let out = transporter(t.path(), &["train", "--config", "tr.json", "--out-dir", "tr"], None);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn empty_config_file_means_defaults() {
    let t = tempfile::tempdir().unwrap();
    fs::write(t.path().join("empty.json"), "\n").unwrap();
    ok(t.path(), &["ring-demo", "--config", "empty.json", "--out-dir", "a"]);
    ok(t.path(), &["ring-demo", "--out-dir", "b"]);
    assert_eq!(manifest(&t.path().join("a")).artifacts, manifest(&t.path().join("b")).artifacts);
}

#[test]
fn seed_precedence_flag_then_env_then_config() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    fs::write(d.join("c.json"), r#"{"seed": 5, "n_periods": 64}"#).unwrap();
    ok(d, &["encode", "--config", "c.json", "--out-dir", "cfg"]);
    assert_eq!(manifest(&d.join("cfg")).seed, Some(5));

    let out = transporter(d, &["encode", "--config", "c.json", "--out-dir", "env"], Some("9"));
    assert!(out.status.success());
    assert_eq!(manifest(&d.join("env")).seed, Some(9));

    let out = transporter(d, &["encode", "--config", "c.json", "--seed", "12", "--out-dir", "flag"], Some("9"));
    assert!(out.status.success());
    assert_eq!(manifest(&d.join("flag")).seed, Some(12));
    assert_eq!(manifest(&d.join("flag")).config["seed"], 12);
}

#[test]
fn csv_outputs_have_headers() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    ok(d, &["ring-demo", "--out-dir", "rd"]);
    ok(d, &["corners", "--out-dir", "co"]);
    ok(d, &["encode", "--out-dir", "en"]);
    let first = |p: &str| fs::read_to_string(d.join(p)).unwrap().lines().next().unwrap().to_string();
    assert!(first("rd/ring_trace.csv").starts_with("tick,time_ns,period,injected"));
    assert!(first("co/corners.csv").starts_with("freq_hz,ticks_per_period,deficient"));
    assert_eq!(first("en/detections.csv"), "t_abs_ns,phase_ns");
}

#[test]
fn ring_demo_reports_golden_spacing() {
    let t = tempfile::tempdir().unwrap();
    let stdout = ok(t.path(), &["ring-demo", "--out-dir", "rd"]);
    assert!(stdout.contains("spacing between set bits: [2, 2,"), "{stdout}");
    let (header, train) = read_train(&fs::read_to_string(t.path().join("rd/readout.txt")).unwrap()).unwrap();
    assert_eq!(header.photon_count, 16);
    assert_eq!(train.ones(), (0..16).map(|i| 2 * i).collect::<Vec<_>>());
}

#[test]
fn ring_and_oracle_encode_identically() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    ok(d, &["encode", "--seed", "3", "--out-dir", "ring"]);
    ok(d, &["encode", "--seed", "3", "--oracle", "--out-dir", "oracle"]);
    let read = |p: &str| read_train(&fs::read_to_string(d.join(p)).unwrap()).unwrap();
    let (hr, ring) = read("ring/spike_train.txt");
    let (ho, oracle) = read("oracle/spike_train.txt");
    assert_eq!(hr.encoder, "ring");
    assert_eq!(ho.encoder, "oracle");
    assert_eq!(ring.rotated_right(hr.phase_offset), oracle);
}

#[test]
fn train_eval_and_replay_round_trip() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    small_dataset(d, "ds");
    fs::write(
        d.join("tr.json"),
        r#"{"dataset_dir": "ds", "arch": {"n_hidden": 16}, "train": {"epochs": 2, "batch_size": 16}}"#,
    )
    .unwrap();
    ok(d, &["train", "--config", "tr.json", "--out-dir", "tr"]);
    let curve = fs::read_to_string(d.join("tr/training_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3);
    let stdout = ok(d, &["eval", "--model", "tr/model.txt", "--dataset", "ds/test.tsv", "--out-dir", "ev"]);
    assert!(stdout.contains("MAPE:"));
    assert_eq!(fs::read_to_string(d.join("ev/predictions.csv")).unwrap().lines().count(), 17);

    let replay = ok(d, &["replay", "tr/manifest.json", "--out-dir", "tr2", "--threads", "3"]);
    assert!(replay.contains("all 3 artifacts match"), "{replay}");
}

#[test]
fn replay_detects_tampered_outputs() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    ok(d, &["encode", "--out-dir", "en"]);
    let path = d.join("en/manifest.json");
    let mut m = manifest(&d.join("en"));
    m.artifacts.insert("spike_train.txt".into(), "0".repeat(64));
    fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
    let out = transporter(d, &["replay", "en/manifest.json", "--out-dir", "again"], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("spike_train.txt"));
}
