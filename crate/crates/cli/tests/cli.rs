use serde_json::Value;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_transmon-lab");

fn run(sub: &str, cfg: &str, dir: &Path, extra: &[&str]) -> Output {
    let path = dir.join(format!("{sub}.json"));
    fs::write(&path, cfg).unwrap();
    Command::new(BIN)
        .arg(sub)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .env_remove("TRANSMON_LAB_THREADS")
        .output()
        .unwrap()
}

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join("out").join(file)).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&o.stderr)))
}

const REF: &str = r#""model_params": {"lambda": 0.47, "xi_d": 2.5, "hbar_eff": 0.16, "omega_q_t": 0.7071067811865476, "g_t": 0.01}"#;

/// Small enough to run in a couple of seconds.
fn small_relax(seed: u64) -> String {
    format!(
        r#"{{ {REF}, "seed": {seed},
            "ensemble": {{"n_traj": 24}},
            "numerics": {{"D": 60, "d": 24, "steps_per_period": 64, "n_periods": 6, "n_g_count": 2, "n_paths": 24}} }}"#
    )
}

#[test]
fn chaotic_layer_sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{{ {REF}, "sweep": {{"variable": "xi_d", "from": 0.0, "to": 3.0, "count": 7}} }}"#);
    let o = run("chaotic-layer", &cfg, dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path(), "chaotic_layer.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "xi_d,m_bar,p_bar,near_tangent");
    assert_eq!(lines.len(), 8);
    // an undriven pendulum has no layer
    assert!(lines[1].starts_with("0.0000000000000000e0,-1,"), "{}", lines[1]);
    let manifest: Value = serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["experiment"], "chaotic-layer");
    assert_eq!(manifest["config"]["sweep"]["count"], 7);
    assert_eq!(manifest["files"].as_array().unwrap().len(), 2);
    assert!(manifest["software"]["version"].is_string());
}

#[test]
fn single_point_run_emits_one_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{{ {REF}, "numerics": {{"omega_count": 11, "omega_max": 2.0}} }}"#);
    let o = run("rbm-psd", &cfg, dir.path(), &[]);
    assert!(o.status.success());
    let csvs: Vec<_> = fs::read_dir(dir.path().join("out"))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
        .collect();
    assert_eq!(csvs.len(), 1);
    let csv = read(dir.path(), "rbm_psd.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "omega,psd_series,psd_series_two_term,psd_two_term");
    let row: Vec<&str> = lines.nth(3).unwrap().split(',').collect();
    // 17 significant digits round-trip exactly
    let v: f64 = row[1].parse().unwrap();
    assert_eq!(format!("{v:.16e}"), row[1]);
    assert_eq!(csv.lines().count(), 12);
}

#[test]
fn circuit_parameters_are_rescaled() {
    let dir = tempfile::tempdir().unwrap();
    // E_C = 0.25 GHz, ω_d chosen so that ħ_eff = 8E_C/ħω_d = 0.16
    let omega_d = 8.0 * 0.25e9 * 2.0 * std::f64::consts::PI / 0.16;
    let cfg = format!(
        r#"{{ "circuit_params": {{"E_J": 11.0, "E_C": 0.25, "eps_d": {}, "omega_d": {omega_d}, "omega_q": 0.0, "g": 0.0}} }}"#,
        2.5 * omega_d
    );
    let o = run("chaotic-layer", &cfg, dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: Value = serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    let hb = manifest["config"]["model_params"]["hbar_eff"].as_f64().unwrap();
    assert!((hb - 0.16).abs() < 1e-12);
    assert!(manifest["config"]["circuit_params"].is_object());
}

#[test]
fn output_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for threads in ["1", "3"] {
        let sub = dir.path().join(threads);
        fs::create_dir_all(&sub).unwrap();
        let o = run("relax", &small_relax(5), &sub, &["--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outs.push((read(&sub, "relax.csv"), read(&sub, "manifest.json")));
    }
    assert_eq!(outs[0].0, outs[1].0);
    let m: Vec<Value> = outs.iter().map(|(_, m)| serde_json::from_str(m).unwrap()).collect();
    assert_eq!(m[0]["metadata"], m[1]["metadata"]);
    assert_eq!(outs[0].0.lines().next().unwrap(), "t,sz_qm,sz_cm,sz_rbm");
    assert_eq!(outs[0].0.lines().count(), 8);
}

#[test]
fn thread_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(&path, format!(r#"{{ {REF}, "seed": 9, "numerics": {{"n_periods": 50}} }}"#)).unwrap();
    let mut csvs = Vec::new();
    for threads in ["1", "2"] {
        let out = dir.path().join(format!("o{threads}"));
        let o = Command::new(BIN)
            .args(["rbm-path", "--config"])
            .arg(&path)
            .arg("--out")
            .arg(&out)
            .env("TRANSMON_LAB_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success());
        csvs.push(fs::read(out.join("rbm_path.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn same_seed_is_reproducible_and_seeds_differ() {
    let dir = tempfile::tempdir().unwrap();
    let path_csv = |seed: u64, tag: &str| {
        let sub = dir.path().join(tag);
        fs::create_dir_all(&sub).unwrap();
        let o = run("rbm-path", &format!(r#"{{ {REF}, "seed": {seed}, "numerics": {{"n_periods": 20}} }}"#), &sub, &[]);
        assert!(o.status.success());
        read(&sub, "rbm_path.csv")
    };
    let a = path_csv(1, "a");
    assert_eq!(a, path_csv(1, "b"));
    assert_ne!(a, path_csv(2, "c"));
    assert_eq!(a.lines().next().unwrap(), "t,p");
}

#[test]
fn both_parameter_blocks_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{ {REF}, "circuit_params": {{"E_J": 11.0, "E_C": 0.25, "eps_d": 1e9, "omega_d": 1e9, "omega_q": 0.0, "g": 0.0}} }}"#
    );
    let o = run("chaotic-layer", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr_json(&o);
    assert_eq!(err["error"]["kind"], "invalid_config");
    assert_eq!(err["error"]["exit_code"], 2);
}

#[test]
fn malformed_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = [
        "{ not json".to_string(),
        r#"{ "seed": 1 }"#.to_string(),
        format!(r#"{{ {REF}, "experiment": "relax" }}"#),
        format!(r#"{{ {REF}, "numerics": {{"n_periods": 0}} }}"#),
        format!(r#"{{ {REF}, "numerics": {{"n_period": 3}} }}"#),
        format!(r#"{{ {REF}, "sweep": {{"variable": "xi_d", "from": 1.0, "to": 2.0, "count": 0}} }}"#),
        r#"{ "model_params": {"lambda": -1.0, "xi_d": 2.5, "hbar_eff": 0.16} }"#.to_string(),
    ];
    for cfg in &bad {
        let o = run("chaotic-layer", cfg, dir.path(), &[]);
        assert_eq!(o.status.code(), Some(2), "{cfg}");
        assert!(stderr_json(&o)["error"]["message"].is_string());
    }
}

#[test]
fn coarse_drive_grid_is_a_convergence_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{ {REF}, "ensemble": {{"n_traj": 4}},
             "numerics": {{"D": 60, "d": 24, "steps_per_period": 64, "n_periods": 4, "n_g_count": 1, "n_paths": 4, "dt": {}}} }}"#,
        2.0 * std::f64::consts::PI / 20.0
    );
    let o = run("relax", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["error"]["kind"], "accuracy");
}

#[test]
fn help_documents_csv_schema() {
    let o = Command::new(BIN).args(["rmatrix", "--help"]).output().unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("n_g, alpha, beta, k, Delta, R_sq"));
    let o = Command::new(BIN).arg("--help").output().unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["poincare", "sigma-p", "chaotic-layer", "floquet-spectrum", "rbm-psd"] {
        assert!(text.contains(sub), "{sub}");
    }
}
