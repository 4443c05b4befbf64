use std::path::Path;
use std::process::{Command, Output};

fn stochfw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stochfw"))
        .args(args)
        .output()
        .unwrap()
}

fn small_config(dir: &Path, sigma: &str) -> String {
    format!(
        r#"{{
            "problem": {{
                "objective": {{"eigenvalues": [1, 2, 4], "z": [0.5, 0.4, -0.1]}},
                "polytope": {{"preset": "simplex", "dim": 3}}
            }},
            "algorithm": "standard",
            "noise": {{"kind": "gaussian", "sigma": {sigma}}},
            "sampling": {{"mode": "fixed", "params": {{"n": 20}}}},
            "epsilon_grid": [0.2, 0.1, 0.05],
            "replications": 4,
            "master_seed": 11,
            "max_iter": 100000,
            "output_dir": {:?},
            "save_traces": true
        }}"#,
        dir.join("out").display().to_string()
    )
}

#[test]
fn run_then_report_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, small_config(dir.path(), "0.2")).unwrap();
    let out = stochfw(&["run", cfg.to_str().unwrap(), "--workers", "2"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("out/runs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);

    let out = stochfw(&["report", dir.path().join("out").to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("algorithm standard"));

    let trace = dir.path().join("out/traces/eps0_rep0.json");
    let out = stochfw(&["verify", trace.to_str().unwrap()]);
    let code = out.status.code().unwrap();
    assert!(code == 0 || code == 3, "{code}");
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, small_config(dir.path(), "\"wide\"")).unwrap();
    let out = stochfw(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("noise"));
    assert!(!dir.path().join("out").exists());

    let out = stochfw(&["run", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_flags_violating_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.json");
    let record = |k: usize, gap: f64, step: &str| {
        format!(
            r#"{{"k": {k}, "step_type": {step}, "gamma": 0.1, "gamma_max": 1.0, "n_samples": 0,
                "grad_error": 0.0, "good_event": true, "f_gap": {gap}, "active_size": 1, "lyapunov": 1.0}}"#
        )
    };
    let doc = format!(
        r#"{{"kind": "standard",
            "constants": {{"epsilon": 0.1, "eps_g": 0.1, "diameter": 1.0, "lipschitz": 1.0, "mu": 1.0,
                "m_bound": 1.0, "n_vertices": 4, "omega": 1.0, "beta1": 0.0125, "beta2": 0.01, "nu": 0.999,
                "delta_s": 0.000625, "delta_a": 0.0002, "pg_standard": 0.9, "pg_away": 0.9,
                "one_minus_pg_standard": 0.1, "one_minus_pg_away": 0.1}},
            "trace": {{"records": [{}, {}], "t_eps": null, "total_samples": 0, "final_gap": 0.999999}}}}"#,
        record(0, 1.0, "\"fw\""),
        record(1, 0.999999, "null")
    );
    std::fs::write(&trace, doc).unwrap();
    let out = stochfw(&["verify", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"flagged\": [\n    0\n  ]"));
}

#[test]
fn lmo_check_on_preset() {
    let dir = tempfile::tempdir().unwrap();
    let poly = dir.path().join("p.json");
    std::fs::write(&poly, r#"{"preset": "box", "dim": 3, "scale": 2.0}"#).unwrap();
    let out = stochfw(&["lmo-check", poly.to_str().unwrap(), "--trials", "50"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"mismatches\": 0"));
}
