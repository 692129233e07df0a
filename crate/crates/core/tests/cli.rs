use std::path::Path;
use std::process::{Command, Output};

use sipfw::config::{template, ConfigFile};

fn sipfw(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sipfw")).args(args).current_dir(dir).env_remove("SIPFW_THREADS").output().unwrap()
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let text = template(2).replace("grid = 64 ", "grid = 32 ").replace("snapshot_every = 50 ", "snapshot_every = 25 ");
    let path = dir.join("tiny.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn bins(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".bin"))
        .collect();
    v.sort();
    v
}

#[test]
fn init_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    for dim in ["2", "3"] {
        let out = sipfw(&["init-config", "--dim", dim], tmp.path());
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.starts_with("# sipfw run configuration."));
        ConfigFile::parse(&text).unwrap();
    }
    assert_eq!(sipfw(&["init-config", "--dim", "4"], tmp.path()).status.code(), Some(2));
}

#[test]
fn tiny_run_writes_expected_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = sipfw(&["run", "--config", cfg.to_str().unwrap(), "--out", "o", "--threads", "2"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("o");
    // steps 0, 25, 50, 75, 100 with four fields each
    assert_eq!(bins(&dir).len(), 20);
    assert!(dir.join("config.resolved.toml").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["steps"], 100);
    assert_eq!(manifest["threads"], 2);
    assert_eq!(manifest["seed"], 7);
    assert!(manifest["phase_seconds"]["deposit"].as_f64().unwrap() > 0.0);
}

#[test]
fn manifest_rerun_is_bitwise_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let a = sipfw(
        &["run", "--config", cfg.to_str().unwrap(), "--out", "a", "--seed", "41", "--snapshot-every", "50"],
        tmp.path(),
    );
    assert!(a.status.success());
    let b = sipfw(&["run", "--config", "a/manifest.json", "--out", "b", "--threads", "3"], tmp.path());
    assert!(b.status.success(), "{}", String::from_utf8_lossy(&b.stderr));
    let names = bins(&tmp.path().join("a"));
    assert_eq!(names.len(), 12);
    assert_eq!(names, bins(&tmp.path().join("b")));
    for n in names {
        let x = std::fs::read(tmp.path().join("a").join(&n)).unwrap();
        let y = std::fs::read(tmp.path().join("b").join(&n)).unwrap();
        assert!(x == y, "{n} differs");
    }
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("b/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 41);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let base = template(2);
    let missing = base.replace("tau = 0.001       # time step, at most 0.5\n", "");
    std::fs::write(tmp.path().join("missing.toml"), missing).unwrap();
    let out = sipfw(&["run", "--config", "missing.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`tau`") && err.contains("line"), "{err}");

    std::fs::write(tmp.path().join("big.toml"), base.replace("tau = 0.001", "tau = 0.6")).unwrap();
    let out = sipfw(&["run", "--config", "big.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("0.5"));

    std::fs::write(tmp.path().join("typo.toml"), base.replace("[output]", "[output]\nsnapshots = 3")).unwrap();
    let out = sipfw(&["run", "--config", "typo.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("snapshots"));

    let out = sipfw(&["run", "--config", "nowhere.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let out = sipfw(&["run"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let out = sipfw(&["run", "--config", "big.toml", "--threads", "0"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn threads_fall_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let text = template(2).replace("t_final = 0.1", "t_final = 0.005").replace("grid = 64 ", "grid = 16 ");
    std::fs::write(tmp.path().join("c.toml"), text).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sipfw"))
        .args(["run", "--config", "c.toml", "--out", "o"])
        .current_dir(tmp.path())
        .env("SIPFW_THREADS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("o/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["threads"], 3);
}

#[test]
fn convergence_writes_table_and_slope() {
    let tmp = tempfile::tempdir().unwrap();
    let text = template(2).replace("t_final = 0.1", "t_final = 0.02").replace("particles = 16384", "particles = 4096");
    std::fs::write(tmp.path().join("c.toml"), text).unwrap();
    let out = sipfw(&["convergence", "--config", "c.toml", "--resolutions", "16,32"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 3"));

    let out = sipfw(&["convergence", "--config", "c.toml", "--resolutions", "16,32,64", "--out", "conv"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("slope = "));
    let csv = std::fs::read_to_string(tmp.path().join("conv/convergence.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "H,P,tau,T,E,seed");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("16,4096,"));
}

#[test]
fn compare_zero_dynamics_hits_sampling_floor() {
    let tmp = tempfile::tempdir().unwrap();
    let text = template(2)
        .replace("chi = 0.4", "chi = 0.0")
        .replace("d_u = 0.01", "d_u = 0.0")
        .replace("d_m = 0.01", "d_m = 0.0")
        .replace("d_w = 0.01", "d_w = 0.0")
        .replace("neutral_growth = false", "neutral_growth = true")
        .replace("allow_zero_params = false", "allow_zero_params = true")
        .replace("grid = 64 ", "grid = 32 ")
        .replace("particles = 16384", "particles = 65536")
        .replace("t_final = 0.1", "t_final = 0.05")
        .replace("reference_grid = 256", "reference_grid = 32");
    std::fs::write(tmp.path().join("z.toml"), text).unwrap();
    let out = sipfw(&["compare", "--config", "z.toml", "--out", "cmp"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("cmp/compare.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 4);
    // nothing moves on either side, so E only carries the sampling noise of
    // 65536 particles seen on the 16 x 16 comparison grid
    let floor = (256.0f64 / 65536.0).sqrt();
    for r in &rows {
        assert!((r[1] - rows[0][1]).abs() < 1e-12);
        assert!(r[1] < floor, "E = {} above Monte Carlo floor {floor}", r[1]);
        assert!((r[2] - r[3]).abs() < 2e-2 * r[3]);
    }
}

#[test]
fn compare_rejects_three_dimensions() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c3.toml"), template(3)).unwrap();
    let out = sipfw(&["compare", "--config", "c3.toml"], tmp.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("2D"));
}

#[test]
fn resample_demo_reports_means() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sipfw(&["resample-demo", "--trials", "4000", "--seed", "5", "--out", "r.csv"], tmp.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("particle count preserved: true"), "{text}");
    let csv = std::fs::read_to_string(tmp.path().join("r.csv")).unwrap();
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((row[2] - 1.5).abs() < 3.0 * row[4]);
    assert_eq!(row[5], 0.0);
}
