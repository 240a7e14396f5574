//! Black-box runs of the `phase-scope` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phase-scope"))
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn base_config(out: &Path, j2: &[f64], noise: &str) -> Value {
    json!({
        "model": {"num_sites": 4, "boundary": "open", "bx": 0.1, "j2": j2},
        "noise": noise,
        "mitigation": {"trex": false, "twirl": false, "zne": false, "instances": 4},
        "shots": 20000,
        "fs_shots": 4000,
        "seed": 3,
        "output_dir": out,
    })
}

fn run(sub: &str, config: &Path, extra: &[&str]) -> Output {
    bin().arg(sub).arg("--config").arg(config).args(extra).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Last stdout line, which every subcommand uses for its output path.
fn last_line(o: &Output) -> PathBuf {
    let text = String::from_utf8_lossy(&o.stdout);
    PathBuf::from(text.lines().last().expect("output path").trim())
}

fn results(path: &Path) -> Vec<csv::StringRecord> {
    let text = fs::read_to_string(path).unwrap();
    let body = text.split_once('\n').unwrap().1;
    csv::Reader::from_reader(body.as_bytes()).records().map(|r| r.unwrap()).collect()
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    let body = text.split_once('\n').unwrap().1;
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let idx = rdr.headers().unwrap().iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rdr.records().map(|r| r.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn config_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let missing = run("scan", &tmp.path().join("absent.json"), &[]);
    assert_eq!(code(&missing), 2);

    let mut cfg = base_config(tmp.path(), &[0.3, 0.2], "ideal");
    let path = write_config(tmp.path(), &cfg);
    assert_eq!(code(&run("optimize", &path, &[])), 2);

    cfg["model"]["j2"] = json!([0.2, 0.3]);
    cfg["unknown_key"] = json!(1);
    let path = write_config(tmp.path(), &cfg);
    assert_eq!(code(&run("ed", &path, &[])), 2);

    cfg.as_object_mut().unwrap().remove("unknown_key");
    let path = write_config(tmp.path(), &cfg);
    let o = run("ed", &path, &["--mitigation.zne", "true", "--mitigation.lambdas", "[1,2]"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("config error"));
}

#[test]
fn optimize_archives_parameters_reproducibly() {
    let j2 = [0.2, 0.4, 0.6];
    let mut dirs = Vec::new();
    for _ in 0..2 {
        let tmp = TempDir::new().unwrap();
        let path = write_config(tmp.path(), &base_config(&tmp.path().join("runs"), &j2, "ideal"));
        let o = run("optimize", &path, &[]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let run_dir = last_line(&o);
        let params: Vec<_> = fs::read_dir(run_dir.join("params")).unwrap().map(|e| e.unwrap().path()).collect();
        assert_eq!(params.len(), 3);
        let manifest: Value = serde_json::from_str(&fs::read_to_string(run_dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["points"].as_array().unwrap().len(), 3);
        dirs.push((tmp, run_dir));
    }
    let (a, b) = (&dirs[0].1, &dirs[1].1);
    assert_eq!(a.file_name(), b.file_name());
    for rel in ["manifest.json", "params/point_000.json", "params/point_001.json", "params/point_002.json"] {
        assert_eq!(fs::read(a.join(rel)).unwrap(), fs::read(b.join(rel)).unwrap(), "{rel} differs");
    }
}

#[test]
fn ideal_scan_matches_statevector_and_analyze_runs() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), &base_config(tmp.path(), &[0.2, 0.35, 0.5, 0.65], "ideal"));
    let o = run("scan", &path, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = last_line(&o);
    let raw = column(&csv, "E_raw");
    let err = column(&csv, "E_raw_err");
    let ideal = column(&csv, "E_ideal");
    for i in 0..raw.len() {
        assert!((raw[i] - ideal[i]).abs() <= 4.0 * err[i], "point {i}: {} vs {} ± {}", raw[i], ideal[i], err[i]);
    }
    assert_eq!(results(&csv).len(), 4);

    let o = run("analyze", &path, &[]);
    assert_eq!(code(&o), 0);
    let report: Value = serde_json::from_str(&fs::read_to_string(last_line(&o)).unwrap()).unwrap();
    assert!(report["intervals"].is_array() && report["notes"].is_array());
}

#[test]
fn unmitigated_noise_raises_energy() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), &base_config(tmp.path(), &[0.2, 0.5, 0.8], "default"));
    let o = run("scan", &path, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = last_line(&o);
    let raw = column(&csv, "E_raw");
    let ideal = column(&csv, "E_ideal");
    for (r, i) in raw.iter().zip(&ideal) {
        assert!(r > i, "noisy {r} not above noise-free {i}");
    }
}

#[test]
fn missing_parameters_exit_one() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), &base_config(tmp.path(), &[0.2, 0.4, 0.6], "ideal"));
    let o = run("optimize", &path, &[]);
    assert_eq!(code(&o), 0);
    fs::remove_file(last_line(&o).join("params/point_001.json")).unwrap();
    let o = run("scan", &path, &[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("missing-params"));
    let flags: Vec<String> = results(&last_line(&o)).iter().map(|r| r[r.len() - 1].to_string()).collect();
    assert!(flags[1].contains("missing-params") && !flags[0].contains("missing-params") && !flags[2].contains("missing-params"), "{flags:?}");
}

#[test]
fn corrupted_x_records_raise_a_reliability_note() {
    let tmp = TempDir::new().unwrap();
    let j2 = [0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5];
    let path = write_config(tmp.path(), &base_config(tmp.path(), &j2, "ideal"));
    let o = run("scan", &path, &[]);
    assert_eq!(code(&o), 0);
    let run_dir = last_line(&o).parent().unwrap().to_path_buf();

    let o = run("analyze", &path, &[]);
    let clean: Value = serde_json::from_str(&fs::read_to_string(last_line(&o)).unwrap()).unwrap();
    assert!(clean["notes"].as_array().unwrap().is_empty());

    // Replace the X-basis energy histogram at point 3 with a fully polarized one.
    let rec_path = run_dir.join("records/point_003.jsonl");
    let text = fs::read_to_string(&rec_path).unwrap();
    let mut out = String::new();
    let mut touched = 0;
    for line in text.lines() {
        let mut v: Value = serde_json::from_str(line).unwrap();
        if v["basis"] == "X" && v["meta"]["circuit_id"] == "energy:X" {
            let shots = v["shots"].as_u64().unwrap();
            let mask = v["readout_mask"].as_u64().unwrap();
            v["counts"] = json!({ mask.to_string(): shots });
            touched += 1;
        }
        out.push_str(&serde_json::to_string(&v).unwrap());
        out.push('\n');
    }
    assert!(touched > 0);
    fs::write(&rec_path, out).unwrap();

    let o = run("analyze", &path, &[]);
    assert_eq!(code(&o), 0);
    let report: Value = serde_json::from_str(&fs::read_to_string(last_line(&o)).unwrap()).unwrap();
    let notes = report["notes"].as_array().unwrap();
    assert!(!notes.is_empty(), "{report}");
    assert!(notes.iter().any(|n| n["lo"] == 0.3 || n["hi"] == 0.35), "{report}");
}

#[test]
fn empty_scan_gives_empty_report() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), &base_config(tmp.path(), &[], "ideal"));
    let o = run("scan", &path, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(results(&last_line(&o)).is_empty());
    let o = run("analyze", &path, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(last_line(&o)).unwrap()).unwrap();
    assert!(report["intervals"].as_array().unwrap().is_empty());
    assert!(report["notes"].as_array().unwrap().is_empty());
}

#[test]
fn ed_writes_references() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), &base_config(tmp.path(), &[0.2, 0.5], "ideal"));
    let o = run("ed", &path, &["--model.num_sites", "6"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ed = last_line(&o);
    for f in ["summary.csv", "spectrum_000.csv", "spectrum_001.csv", "ground_000.bin", "ground_001.bin"] {
        assert!(ed.join(f).exists(), "{f} missing");
    }
    assert_eq!(fs::metadata(ed.join("ground_000.bin")).unwrap().len(), 8 + 16 * 64);
}

#[test]
fn selftest_passes() {
    let o = bin().arg("selftest").output().unwrap();
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 8);
    assert!(!text.contains("FAIL"));
}
