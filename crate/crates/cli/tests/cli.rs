use std::path::Path;
use std::process::{Command, Output};

fn slipflow(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slipflow")).args(args).current_dir(dir).output().expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, json).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = r#"{"f":{"kind":"trig_vortex","amp":50,"k":3},"t_end":0.3,"refinement":2,"nev":6}"#;

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn csv_headers_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for cmd in ["eigen", "run", "linearize"] {
        let o = slipflow(&[cmd, "--config", &cfg, "--out", "o"], dir.path());
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let out = dir.path().join("o");
    assert_eq!(first_line(&out.join("eigen.csv")), "k,mu");
    assert_eq!(first_line(&out.join("trajectory.csv")), "t,H_norm_sq,Du_sq,boundary_dissipation,work,energy_residual");
    assert_eq!(first_line(&out.join("qn.csv")), "N,qN,analytic_bound");
    assert_eq!(first_line(&out.join("lt.csv")), "N,ratio");
    assert!(out.join("basis.bin").exists() && out.join("checkpoint.bin").exists());
    let eig = std::fs::read_to_string(out.join("eigen.csv")).unwrap();
    assert_eq!(eig.lines().count(), 7);
}

#[test]
fn report_has_expected_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = slipflow(&["dimension", "--config", &cfg, "--out", "o"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("o/report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    for k in [
        "b0_bound",
        "b0_emp",
        "b1_bound",
        "b1_emp",
        "n_star_numeric",
        "n_star_formula",
        "formula_bound",
        "c0_parts",
        "regime",
    ] {
        assert!(keys.contains(&k), "missing {k}");
    }
    for k in ["korn", "kappa", "eig_slope"] {
        assert!(v["c0_parts"].get(k).is_some(), "missing c0_parts.{k}");
    }
    for k in ["m_alpha", "m_beta", "grashof"] {
        assert!(v["regime"].get(k).is_some(), "missing regime.{k}");
    }
}

#[test]
fn zero_forcing_dimension_is_trivial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"t_end":0.2,"refinement":2,"nev":4}"#);
    let o = slipflow(&["dimension", "--config", &cfg, "--out", "o"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/report.json")).unwrap()).unwrap();
    assert_eq!(v["n_star_numeric"], 1);
    assert_eq!(v["formula_bound"].as_f64(), Some(0.0));
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for out in ["a", "b"] {
        for cmd in ["mesh", "eigen", "run", "linearize"] {
            let o = slipflow(&[cmd, "--config", &cfg, "--out", out, "--seed", "7"], dir.path());
            assert!(o.status.success(), "{cmd}");
        }
    }
    for f in ["mesh.txt", "eigen.csv", "basis.bin", "trajectory.csv", "checkpoint.bin", "qn.csv", "lt.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
}

#[test]
fn unknown_key_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"viscosity": 2.0}"#);
    let o = slipflow(&["run", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("viscosity"));
}

#[test]
fn invalid_values_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"nu": -1.0}"#);
    assert_eq!(slipflow(&["eigen", "--config", &cfg], dir.path()).status.code(), Some(1));
    assert_eq!(slipflow(&["mesh", "--refine", "99"], dir.path()).status.code(), Some(1));
    assert_eq!(slipflow(&["run", "--dt", "0"], dir.path()).status.code(), Some(1));
    assert_eq!(slipflow(&["run", "--config", "missing.json"], dir.path()).status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"f":{"kind":"trig_vortex","amp":1e6,"k":2},"dt":0.05,"t_end":0.1,"refinement":1,"picard_max":2}"#,
    );
    let o = slipflow(&["run", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn scalecheck_passes_for_stokes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"nu":2.0,"ell":1.5,"alpha":0.7,"beta":0.4,"convection":false,
            "f":{"kind":"trig_vortex","amp":5,"k":2},"t_end":0.1,"dt":0.02,"refinement":2}"#,
    );
    let o = slipflow(&["scalecheck", "--config", &cfg, "--out", "o"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
}

#[test]
fn sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"f":{"kind":"trig_vortex","amp":20,"k":2},"t_end":0.2,"refinement":1,"nev":3,
            "grid":{"alphas":[1,2],"betas":[0.5],"nus":[1],"amplitudes":[0,1]}}"#,
    );
    let o = slipflow(&["sweep", "--config", &cfg, "--out", "o"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(dir.path().join("o/regime_table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        "alpha,beta,nu,amplitude,forcing_norm,m_alpha,m_beta,formula_bound,n_star_numeric,error"
    );
    assert_eq!(lines.count(), 4);
}
