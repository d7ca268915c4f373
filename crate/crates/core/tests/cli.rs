use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::{json, Value};

fn mimo_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mimo-lab"))
        .args(args)
        .env_remove("MIMO_LAB_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

fn duplicate_paths() -> Value {
    let path = |rho: f64, phi: f64| {
        json!({"rho": rho, "phi": phi, "doa": {"az": 0.3, "el": -0.2}, "dod": {"az": -0.5, "el": 0.4}})
    };
    json!({
        "rx_array": {"type": "upa", "nx": 4, "ny": 2},
        "tx_array": {"type": "upa", "nx": 4, "ny": 4},
        "paths": [path(1.0, 0.3), path(0.6, 2.0)],
        "observation": {"target_snr_db": 10.0}
    })
}

#[test]
fn crb_report_floor_is_three_at_ten_paths_and_ten_db() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "crb.json",
        &json!({
            "generator": {"n_clusters": 2, "paths_per_cluster": 5, "angular_spread_deg": 10.0},
            "observation": {"target_snr_db": 10.0}
        }),
    );
    let out = dir.path().join("report.json");
    let o = mimo_lab(&["crb", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["n_p"], 60);
    let floor = r["floor_3p_over_snr"].as_f64().unwrap();
    assert!((floor - 3.0).abs() < 1e-12, "floor {floor}");
    assert!(r["crb_relative"].as_f64().unwrap() >= floor * (1.0 - 1e-9));
    assert_eq!(r["optimal_observation"], true);
    assert!(r["condition_number"].as_f64().is_some());
}

#[test]
fn strict_flag_turns_ill_conditioning_into_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "dup.json", &duplicate_paths());
    let o = mimo_lab(&["crb", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["ill_conditioned"], true);
    let o = mimo_lab(&["crb", "--config", &cfg, "--strict"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn invalid_configs_exit_2_before_computing() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        json!({"observation": {"target_snr_db": 10.0}, "unknown": 1}),
        json!({"observation": {}}),
        json!({"observation": {"sigma2": 0.0}}),
        json!({"rx_array": {"type": "ula", "n": 0}, "observation": {"sigma2": 1.0}}),
        json!({"paths": [], "observation": {"sigma2": 1.0}}),
        json!({"paths": [{"rho": -1.0, "phi": 0.0, "doa": {"az": 0.0, "el": 0.0}, "dod": {"az": 0.0, "el": 0.0}}]}),
    ];
    for (k, c) in cases.iter().enumerate() {
        let cfg = write_config(dir.path(), &format!("bad{k}.json"), c);
        let o = mimo_lab(&["crb", "--config", &cfg]);
        assert_eq!(o.status.code(), Some(2), "case {k}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(mimo_lab(&["crb", "--config", "/nonexistent.json"]).status.code(), Some(2));
    assert_eq!(mimo_lab(&["bench", "trials=0"]).status.code(), Some(2));
    assert_eq!(mimo_lab(&["bench", "P_budgets=[]"]).status.code(), Some(2));
    assert_eq!(mimo_lab(&["estimate", "p_budget=0"]).status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_mimo-lab"))
        .args(["bench", "trials=1", "m=4", "n=4"])
        .env("MIMO_LAB_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

fn strip_times(csv: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(csv.as_bytes());
    let headers = r.headers().unwrap().clone();
    let t = headers.iter().position(|h| h == "mean_wall_time_s").unwrap();
    r.records()
        .map(|rec| {
            rec.unwrap()
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != t)
                .map(|(_, f)| f.to_string())
                .collect()
        })
        .collect()
}

#[test]
fn smoke_bench_is_fast_reproducible_and_seedable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bench.json",
        &json!({"trials": 2, "m": 100, "n": 100, "P_budgets": [1, 2]}),
    );
    let run = |stem: &str, extra: &[&str]| {
        let out = dir.path().join(stem);
        let mut args = vec!["bench", "--config", &cfg, "--out", out.to_str().unwrap(), "--emit-table"];
        args.extend_from_slice(extra);
        let o = mimo_lab(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("P = 2"));
        std::fs::read_to_string(out.with_extension("csv")).unwrap()
    };
    let started = Instant::now();
    let a = run("a", &[]);
    assert!(started.elapsed().as_secs_f64() < 10.0);
    let b = run("b", &["--threads", "1"]);
    let c = run("c", &["--seed", "99"]);

    let (ra, rb, rc) = (strip_times(&a), strip_times(&b), strip_times(&c));
    assert_eq!(ra.len(), 4);
    assert_eq!(ra, rb);
    assert_eq!(a.lines().next(), c.lines().next());
    assert_ne!(ra, rc);
    let json: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 4);
    assert_eq!(json["config"]["m"], 100);
}

#[test]
fn estimate_reports_both_strategies() {
    let o = mimo_lab(&[
        "estimate",
        "grid.m=64",
        "grid.n=64",
        "p_budget=3",
        "generator.n_clusters=1",
        "observation.snr_reference=per_entry",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["strategy"], "joint");
    assert_eq!(rows[0]["score_evals"], 64 * 64 * 3);
    assert_eq!(rows[1]["score_evals"], (64 + 64) * 3);
    assert!(rows.iter().all(|row| row["rmse"].as_f64().unwrap() < 1.0));
    assert_eq!(r["runs"][0]["atoms"].as_array().unwrap().len(), 3);
}
