use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tclevy"))
}

fn reference() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/reference.json")
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn reference_json() -> Value {
    serde_json::from_str(&std::fs::read_to_string(reference()).unwrap()).unwrap()
}

fn read_density(path: &Path) -> Vec<(f64, f64)> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap())
        })
        .collect()
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let st = bin()
            .args(["simulate", "--config"])
            .arg(reference())
            .arg("--out")
            .arg(out)
            .args(["--seed", "99"])
            .status()
            .unwrap();
        assert!(st.success());
    }
    for f in ["returns.csv", "latents.csv", "effective_config.json"] {
        let x = std::fs::read(a.join(f)).unwrap();
        let y = std::fs::read(b.join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs between runs");
    }
}

#[test]
fn density_shift_equivariance() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = reference_json();
    cfg["model"]["delta"] = 0.5.into();
    let base_cfg = write_config(dir.path(), "base.json", &cfg);
    let c = 0.8;
    cfg["model"]["mu"] = c.into();
    let shifted_cfg = write_config(dir.path(), "shifted.json", &cfg);

    let run = |config: &Path, out: &str, grid: &str| {
        let st = bin()
            .arg("density")
            .arg("--config")
            .arg(config)
            .arg("--out")
            .arg(dir.path().join(out))
            .args(["--grid", grid])
            .status()
            .unwrap();
        assert!(st.success());
        read_density(&dir.path().join(out).join("density.csv"))
    };
    // cΔ = 0.4 moves the grid by exactly four steps.
    let base = run(&base_cfg, "base", "-2:2:0.1");
    let shifted = run(&shifted_cfg, "shifted", "-1.6:2.4:0.1");
    assert_eq!(base.len(), shifted.len());
    for ((x0, f0), (x1, f1)) in base.iter().zip(&shifted) {
        assert!((x1 - x0 - 0.4).abs() < 1e-12);
        assert!((f0 - f1).abs() <= 1e-10, "x = {x0}: {f0} vs {f1}");
    }
}

#[test]
fn negative_b_reports_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = reference_json();
    cfg["model"]["vol"]["b"] = (-1.0).into();
    let path = write_config(dir.path(), "bad.json", &cfg);
    let out = dir.path().join("out");
    let st = bin().arg("density").arg("--config").arg(&path).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let err: Value = serde_json::from_str(&std::fs::read_to_string(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(err["error"]["field"], "model.vol.b");
    assert_eq!(err["schema_version"], 1);
}

#[test]
fn effective_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let st = bin()
        .args(["simulate", "--config"])
        .arg(reference())
        .arg("--out")
        .arg(&first)
        .status()
        .unwrap();
    assert!(st.success());
    let st = bin()
        .args(["simulate", "--config"])
        .arg(first.join("effective_config.json"))
        .arg("--out")
        .arg(&second)
        .status()
        .unwrap();
    assert!(st.success());
    let a = std::fs::read(first.join("effective_config.json")).unwrap();
    let b = std::fs::read(second.join("effective_config.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn loglik_reads_data_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fit.json");
    let st = bin().arg("loglik").arg("--config").arg(&cfg).arg("--out").arg(dir.path()).status().unwrap();
    assert!(st.success());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("loglik.json")).unwrap()).unwrap();
    assert!(v["log_likelihood"].as_f64().unwrap().is_finite());
    assert_eq!(v["n_blocks"], 100);
}

#[test]
fn check_passes_on_reference_config() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin().arg("check").arg("--config").arg(reference()).arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("check.json")).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
}
