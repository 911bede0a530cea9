use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mala::io::read_labels;
use serde_json::Value;
use tempfile::TempDir;

fn mala(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mala"))
        .args(args)
        .current_dir(dir)
        .env_remove("MALA_SEED")
        .env_remove("MALA_THRESHOLD")
        .env_remove("MALA_OUT")
        .output()
        .expect("binary runs")
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let out = mala(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn error_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("json error on stderr")
}

fn synth(dir: &Path) {
    ok_json(dir, &["synth", "--shape", "4,12,12", "--regions", "4", "--seed", "5", "--out", "s"]);
}

#[test]
fn synth_writes_volumes_and_echoes_the_spec() {
    let tmp = TempDir::new().unwrap();
    let spec = ok_json(tmp.path(), &["synth", "--shape", "3,5,7", "--regions", "2", "--seed", "9", "--out", "s"]);
    assert_eq!(spec["shape"], serde_json::json!([3, 5, 7]));
    assert_eq!(spec["seed"], 9);
    for f in ["gt.json", "gt.bin", "affinities.json", "affinities.bin"] {
        assert!(tmp.path().join("s").join(f).exists(), "{f}");
    }
    let gt = read_labels(tmp.path().join("s/gt")).unwrap();
    assert_eq!(gt.shape().dims(), [3, 5, 7]);
}

#[test]
fn synth_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    for out in ["a", "b"] {
        ok_json(tmp.path(), &["synth", "--shape", "4,6,6", "--regions", "3", "--sigma", "0.1", "--seed", "2", "--out", out]);
    }
    for f in ["gt.bin", "affinities.bin"] {
        assert_eq!(fs::read(tmp.path().join("a").join(f)).unwrap(), fs::read(tmp.path().join("b").join(f)).unwrap());
    }
}

#[test]
fn staged_run_recovers_clean_labels() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    synth(dir);
    let ws = ok_json(dir, &["watershed", "--affinities", "s/affinities", "--out", "frag"]);
    assert!(ws["fragments"].as_u64().unwrap() >= 4);
    let ag = ok_json(dir, &["agglomerate", "--affinities", "s/affinities", "--fragments", "frag", "--out", "h.csv"]);
    assert_eq!(ag["merges"].as_u64().unwrap() + 1, ws["fragments"].as_u64().unwrap());
    let csv = fs::read_to_string(dir.join("h.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("survivor,absorbed,score"));
    ok_json(dir, &["segment", "--fragments", "frag", "--history", "h.csv", "--threshold", "0.5", "--out", "seg"]);
    let eval = ok_json(dir, &["evaluate", "--gt", "s/gt", "--segmentation", "seg"]);
    assert_eq!(eval["voi_total"], 0.0);
    assert_eq!(eval["cremi_score"], 0.0);
}

#[test]
fn naive_agglomeration_writes_the_same_history() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    synth(dir);
    ok_json(dir, &["watershed", "--affinities", "s/affinities", "--out", "frag", "--mode", "2d"]);
    ok_json(dir, &["agglomerate", "--affinities", "s/affinities", "--fragments", "frag", "--out", "a.csv"]);
    ok_json(dir, &["agglomerate", "--affinities", "s/affinities", "--fragments", "frag", "--out", "b.csv", "--naive"]);
    assert_eq!(fs::read(dir.join("a.csv")).unwrap(), fs::read(dir.join("b.csv")).unwrap());
}

#[test]
fn evaluate_sweep_writes_one_row_per_step() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    synth(dir);
    ok_json(dir, &["watershed", "--affinities", "s/affinities", "--out", "frag"]);
    ok_json(dir, &["agglomerate", "--affinities", "s/affinities", "--fragments", "frag", "--out", "h.csv"]);
    ok_json(dir, &["segment", "--fragments", "frag", "--history", "h.csv", "--threshold", "0.5", "--out", "seg"]);
    let args = ["evaluate", "--gt", "s/gt", "--segmentation", "seg", "--sweep", "sweep.csv", "--fragments", "frag"];
    let out = mala(dir, &args);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "usage");
    let mut args = args.to_vec();
    args.extend(["--history", "h.csv", "--steps", "4"]);
    ok_json(dir, &args);
    let sweep = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 5);
}

#[test]
fn malis_fast_and_brute_force_agree() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok_json(dir, &["synth", "--shape", "2,4,4", "--regions", "3", "--sigma", "0.2", "--seed", "4", "--out", "s"]);
    let fast = ok_json(dir, &["malis", "--affinities", "s/affinities", "--gt", "s/gt", "--out", "g1"]);
    let slow = ok_json(dir, &["malis", "--affinities", "s/affinities", "--gt", "s/gt", "--out", "g2", "--brute-force"]);
    assert!((fast["loss"].as_f64().unwrap() - slow["loss"].as_f64().unwrap()).abs() < 1e-9);
    assert_eq!(fs::read(dir.join("g1.bin")).unwrap(), fs::read(dir.join("g2.bin")).unwrap());
    assert!(fast["loss"].as_f64().unwrap() > 0.0);

    let out = mala(dir, &["malis", "--affinities", "s/affinities", "--gt", "s/gt", "--out", "g3", "--brute-force", "--oracle-limit", "8"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_writes_csv_and_rejects_bad_sizes() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let out = mala(dir, &["bench", "--sizes", "100,300", "--repeats", "1", "--out", "b.csv"]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.join("b.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,t_bucket,t_naive");
    assert!(lines[1].starts_with("100,") && lines[2].starts_with("300,"));

    let out = mala(dir, &["bench", "--sizes", "300,100"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"], "config");
}

#[test]
fn pipeline_from_a_synth_spec() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("spec.json"), r#"{"shape":[4,16,16],"n_regions":4,"noise_sigma":0.0,"flip_prob":0.0,"seed":3}"#)
        .unwrap();
    let report = ok_json(dir, &["pipeline", "--synth", "spec.json", "--out-dir", "p", "--threshold", "0.5"]);
    assert_eq!(report["evaluation"]["voi_total"], 0.0);
    assert!(report["throughput"]["total"].as_f64().unwrap() > 0.0);
    assert!(report["throughput"]["unet"].is_null());
    let saved: Value = serde_json::from_str(&fs::read_to_string(dir.join("p/report.json")).unwrap()).unwrap();
    assert_eq!(saved["segments"], report["segments"]);
    for f in ["fragments.json", "segmentation.json", "history.csv", "gt.json", "affinities.json"] {
        assert!(dir.join("p").join(f).exists(), "{f}");
    }
}

#[test]
fn errors_are_json_with_nonzero_exit() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let out = mala(dir, &["evaluate", "--gt", "missing", "--segmentation", "missing"]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_json(&out);
    assert_eq!(err["error"], "io");
    assert!(err["message"].as_str().unwrap().contains("missing"));

    let out = mala(dir, &["evaluate", "--gt", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "usage");

    let out = mala(dir, &["synth", "--shape", "4,4", "--regions", "2", "--out", "s"]);
    assert_eq!(out.status.code(), Some(2));

    assert!(mala(dir, &["--help"]).status.success());
    assert!(mala(dir, &["--version"]).status.success());
}
