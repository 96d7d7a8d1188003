use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bflab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bflab")).args(args).output().unwrap()
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name).display().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].to_string()).collect()
}

fn summary_value(dir: &Path, key: &str) -> String {
    let mut r = csv::Reader::from_path(dir.join("summary.csv")).unwrap();
    r.records()
        .map(|rec| rec.unwrap())
        .find(|rec| &rec[0] == key)
        .map(|rec| rec[1].to_string())
        .unwrap_or_else(|| panic!("no {key} in summary"))
}

fn out(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

#[test]
fn equilibrium_simulation_keeps_entropy() {
    let dir = tempfile::tempdir().unwrap();
    let o = out(&dir, "eq");
    let r = bflab(&["--config", &config("equilibrium.toml"), "--out", o.to_str().unwrap(), "simulate"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let s: Vec<f64> = column(&o.join("diagnostics.csv"), "entropy").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(s.len(), 101);
    assert!(s.iter().all(|v| (v - s[0]).abs() <= 1e-10));
    assert_eq!(summary_value(&o, "format_version"), "1");
    assert_eq!(summary_value(&o, "termination"), "completed");
    assert!(o.join("snap_000000.csv").exists() && o.join("snap_000100.csv").exists());
}

#[test]
fn deep_cold_spot_aborts_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = out(&dir, "deep");
    let r = bflab(&["--config", &config("deep_cold_spot.toml"), "--out", o.to_str().unwrap(), "simulate"]);
    assert_eq!(code(&r), 2);
    assert_eq!(summary_value(&o, "abort_step"), "1");
    assert!(summary_value(&o, "termination").starts_with("positivity_abort"));

    let o = out(&dir, "relaxed");
    let r = bflab(&["--config", &config("deep_cold_spot_relaxed.toml"), "--out", o.to_str().unwrap(), "simulate"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stdout));
}

#[test]
fn io_failures_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let file = out(&dir, "plain_file");
    std::fs::write(&file, "x").unwrap();
    let blocked = file.join("sub");
    let r = bflab(&["--config", &config("equilibrium.toml"), "--out", blocked.to_str().unwrap(), "simulate"]);
    assert_eq!(code(&r), 4);
    let r = bflab(&["--config", out(&dir, "missing.toml").to_str().unwrap(), "simulate"]);
    assert_eq!(code(&r), 4);
}

#[test]
fn invalid_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = out(&dir, "bad.toml");
    std::fs::write(&cfg, "[model]\nmu = 0.0\ngamma = 4.0\n").unwrap();
    let r = bflab(&["--config", cfg.to_str().unwrap(), "--out", out(&dir, "o").to_str().unwrap(), "simulate"]);
    assert_eq!(code(&r), 64);
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("model.mu") && err.contains("model.gamma"), "{err}");
    assert_eq!(code(&bflab(&["simulate", "--no-such-flag"])), 64);
}

#[test]
fn derive_check_and_negative_control() {
    let r = bflab(&["derive-check"]);
    assert_eq!(code(&r), 0);
    let text = String::from_utf8_lossy(&r.stdout);
    assert!(text.lines().next().unwrap().contains("max_resid"));
    assert!(!text.contains("FAIL"));
    let r = bflab(&["derive-check", "--self-test-negative"]);
    assert_eq!(code(&r), 1);
    assert!(String::from_utf8_lossy(&r.stdout).contains("FAIL"));
}

fn sweep_table(dir: &Path, axis: &str) -> PathBuf {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_str().unwrap().starts_with(&format!("{axis}_")))
        .unwrap()
}

#[test]
fn mesh_sweep_on_equilibrium_has_zero_distances() {
    let dir = tempfile::tempdir().unwrap();
    let o = out(&dir, "mesh");
    let r = bflab(&[
        "--config",
        &config("equilibrium.toml"),
        "--out",
        o.to_str().unwrap(),
        "--threads",
        "3",
        "sweep",
        "--axis",
        "mesh",
        "--values",
        "1/8,1/16,1/32",
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let d = column(&sweep_table(&o, "mesh"), "distance");
    assert_eq!(d, vec!["0.0"; 3]);
}

#[test]
fn delta_sweep_on_default_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = out(&dir, "short.toml");
    std::fs::write(&cfg, "[time]\nt_end = 2.0\n").unwrap();
    let o = out(&dir, "delta");
    let r = bflab(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        o.to_str().unwrap(),
        "--threads",
        "3",
        "sweep",
        "--axis",
        "delta",
        "--values",
        "1e-2,1e-3,1e-4",
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let d: Vec<f64> = column(&sweep_table(&o, "delta"), "distance").iter().map(|v| v.parse().unwrap()).collect();
    assert!(d.windows(2).all(|w| w[0] > w[1]), "{d:?}");
    assert_eq!(summary_value(&o, "strictly_decreasing"), "true");
}

#[test]
fn sweep_values_must_descend() {
    let dir = tempfile::tempdir().unwrap();
    let o = out(&dir, "x");
    for values in ["1e-4,1e-3,1e-2", "1e-2,1e-3", "1e-2,oops,1e-4"] {
        let r = bflab(&["--out", o.to_str().unwrap(), "sweep", "--axis", "eps", "--values", values]);
        assert_eq!(code(&r), 64, "{values}");
    }
    let r = bflab(&["--out", o.to_str().unwrap(), "sweep", "--axis", "nu", "--values", "3,2,1"]);
    assert_eq!(code(&r), 64);
}

#[test]
fn mms_reaches_formal_order() {
    let dir = tempfile::tempdir().unwrap();
    let o = out(&dir, "mms");
    let r = bflab(&["--out", o.to_str().unwrap(), "mms", "--kind", "diffusive", "--resolutions", "16,32,64"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stdout));
    assert_eq!(column(&o.join("mms_diffusive.csv"), "n"), vec!["16", "32", "64"]);
}
