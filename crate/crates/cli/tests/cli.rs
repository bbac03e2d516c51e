use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn beamlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamlab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen(dir: &Path, count: &str) {
    let o = beamlab(&[
        "dataset-gen", "--count", count, "--reverb", "off", "--noise-type", "stationary", "--out", p(dir), "--seed", "4",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn dataset_enhance_evaluate_roundtrip() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    gen(&data, "2");
    assert_eq!(fs::read_to_string(data.join("manifest.jsonl")).unwrap().lines().count(), 2);

    let manifest = data.join("manifest.jsonl");
    let o = beamlab(&["enhance", "--manifest", p(&manifest), "--method", "mvdr+pf", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["method"], "mvdr+pf");
    assert_eq!(report["aggregate"]["count"], 2);
    assert!(report["aggregate"]["delta_si_sdr_db"]["mean"].as_f64().unwrap() > 0.0);

    let eval = tmp.path().join("eval/report.json");
    let o = beamlab(&[
        "evaluate", "--ref-dir", p(&data), "--est-dir", p(&out.join("enhanced")), "--out", p(&eval),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ext: serde_json::Value = serde_json::from_slice(&fs::read(&eval).unwrap()).unwrap();
    assert_eq!(ext["utterances"].as_array().unwrap().len(), 2);
}

#[test]
fn postfilter_flag_is_recorded_in_method_label() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    gen(&data, "1");
    let manifest = data.join("manifest.jsonl");
    let out = tmp.path().join("out");
    let o = beamlab(&[
        "enhance", "--manifest", p(&manifest), "--method", "mpdr", "--postfilter", "lsa", "--out", p(&out),
    ]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["method"], "mpdr+lsa");
    let o = beamlab(&[
        "enhance", "--manifest", p(&manifest), "--method", "mvdr+pf", "--postfilter", "none", "--out", p(&out),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("manifest.jsonl");
    fs::write(&empty, "").unwrap();
    let out = tmp.path().join("out");
    assert_eq!(code(&beamlab(&["enhance", "--manifest", p(&empty), "--method", "mvdr", "--out", p(&out)])), 2);
    assert_eq!(code(&beamlab(&["enhance", "--manifest", p(&empty), "--method", "bogus", "--out", p(&out)])), 2);
    assert_eq!(code(&beamlab(&["enhance", "--manifest", p(&empty), "--method", "learned", "--out", p(&out)])), 2);
    assert_eq!(code(&beamlab(&["dataset-gen", "--count", "0", "--reverb", "on", "--out", p(&out)])), 2);
    assert_eq!(code(&beamlab(&["evaluate", "--ref-dir", p(tmp.path()), "--est-dir", "/nonexistent", "--out", p(&out)])), 2);
}

#[test]
fn partial_failure_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    gen(&data, "2");
    fs::remove_file(data.join("utt00000_x.wav")).unwrap();
    let out = tmp.path().join("out");
    let o = beamlab(&["enhance", "--manifest", p(&data.join("manifest.jsonl")), "--method", "mvdr", "--out", p(&out)]);
    assert_eq!(code(&o), 3);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["failures"][0]["id"], "utt00000");
    assert_eq!(report["utterances"].as_array().unwrap().len(), 1);
}

#[test]
fn beampattern_writes_csv_and_svg() {
    let tmp = TempDir::new().unwrap();
    let scene = tmp.path().join("scene.json");
    fs::write(
        &scene,
        r#"{"Lx": 8.0, "Ly": 8.0, "Lz": 3.0, "T60": 0.0, "mic_center": [4.0, 4.0, 1.0],
            "tilt_phi": 0.0, "source_theta": 60.0, "noise_theta": 120.0, "source_R": 2.0,
            "noise_R": 2.0, "seed": 2, "noise_type": "stationary"}"#,
    )
    .unwrap();
    let out = tmp.path().join("bp");
    let o = beamlab(&[
        "beampattern", "--method", "mvdr", "--scenario", p(&scene), "--order", "0", "--out", p(&out), "--thetas",
        "0:180:10",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("beampattern.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("theta_deg,p_db"));
    let rows: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(rows.len(), 19);
    assert_eq!(rows.iter().copied().fold(f64::NEG_INFINITY, f64::max), 0.0);
    assert!(fs::read_to_string(out.join("beampattern.svg")).unwrap().starts_with("<svg"));
    assert!(out.join("beampattern_bins.csv").is_file());

    // Learned analysis without a weight file is a configuration error.
    let o = beamlab(&["beampattern", "--method", "learned", "--scenario", p(&scene), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    let o = beamlab(&["beampattern", "--method", "mvdr", "--scenario", p(&scene), "--out", p(&out), "--thetas", "5"]);
    assert_eq!(code(&o), 2);
}
