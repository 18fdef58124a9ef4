use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn idtool(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_idtool"));
    cmd.args(args).env_remove("IDTOOL_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn idtool")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path) -> Output {
    idtool(&[cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "-q"], &[])
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const PROPER: &str = r#"{
  "model": {"interval": {"theta_resolution": [9, 9], "latent_step": 0.1}},
  "data": {"simulate": {"seed": 7, "n": 300}}
}"#;

const DAGGER: &str = r#"{
  "model": {"interval": {"formulation": "dagger", "theta_resolution": [9, 9], "latent_step": 0.1}},
  "data": {"simulate": {"seed": 7, "n": 300}},
  "truncations": [5, 10]
}"#;

#[test]
fn scan_writes_verdicts_and_summary() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "proper.json", PROPER);
    let out = dir.path().join("out");
    let o = run("scan", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("verdicts.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# idtool "));
    assert_eq!(
        lines.next().unwrap(),
        "alpha,beta,gmm_residual_norm,criterion_value,lp_violation,member_sf,member_lp,M,divergent_dirs,error"
    );
    assert_eq!(lines.count(), 81);
    let s = json(&out.join("summary.json"));
    assert_eq!(s["points"], 81);
    assert_eq!(s["complete"], true);
    assert_eq!(s["metadata"]["tool"], "idtool");
    assert!(s["members_lp"].as_u64().unwrap() > 0);
    assert_eq!(s["disagreements"].as_array().unwrap().len(), 0);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "dagger.json", DAGGER);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run("scan", &cfg, &a).status.code(), Some(0));
    assert_eq!(run("scan", &cfg, &b).status.code(), Some(0));
    for f in ["verdicts.csv", "summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn unknown_key_exits_1_and_names_it() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"model": {"interval": {"theta_resolutoin": [3, 3]}}, "data": {"simulate": {"seed": 1}}}"#,
    );
    let out = dir.path().join("out");
    let o = run("scan", &cfg, &out);
    assert_eq!(o.status.code(), Some(1));
    let d = json(&out.join("diagnostics.json"));
    assert_eq!(d["error"]["kind"], "config");
    let msg = d["error"]["message"].as_str().unwrap();
    assert!(msg.contains("theta_resolutoin"), "{msg}");
    assert!(msg.contains("model.interval"), "{msg}");
}

#[test]
fn malformed_json_exits_1() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "broken.json", r#"{"model": {"interval": {}}, "data": "#);
    assert_eq!(run("scan", &cfg, &dir.path().join("out")).status.code(), Some(1));
}

#[test]
fn production_model_is_out_of_scope() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "prod.json", r#"{"model": {"production": {}}, "data": {"simulate": {"seed": 1}}}"#);
    let out = dir.path().join("out");
    let o = run("scan", &cfg, &out);
    assert_eq!(o.status.code(), Some(1));
    let d = json(&out.join("diagnostics.json"));
    assert_eq!(d["error"]["kind"], "not_supported");
    assert!(d["error"]["message"].as_str().unwrap().contains("scope"));
}

#[test]
fn empty_sections_make_the_scan_incomplete() {
    let dir = TempDir::new().unwrap();
    // brackets sit above the latent box, so every section is empty
    let cfg = write_config(
        dir.path(),
        "narrow.json",
        r#"{"model": {"interval": {"latent_bound": 0.1, "latent_step": 0.05, "theta_resolution": [3, 3]}},
            "data": {"simulate": {"seed": 1, "n": 30, "theta0": [3.0, 0.0]}}}"#,
    );
    let out = dir.path().join("out");
    let o = run("scan", &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    let s = json(&out.join("summary.json"));
    assert_eq!(s["complete"], false);
    assert_eq!(s["errors"].as_array().unwrap().len(), 9);
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "proper.json", PROPER);
    let o = idtool(&["scan", "--config", cfg.to_str().unwrap(), "-q"], &[("IDTOOL_THREADS", "zero")]);
    assert_eq!(o.status.code(), Some(1));
    let o = idtool(&["scan", "--config", cfg.to_str().unwrap(), "-q"], &[("IDTOOL_THREADS", "2")]);
    assert_eq!(o.status.code(), Some(0));
    // relative output_dir resolves next to the config
    assert!(dir.path().join("idtool-out/verdicts.csv").exists());
}

#[test]
fn simulated_csv_reproduces_the_scan() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "proper.json", PROPER);
    let sim = dir.path().join("sim");
    assert_eq!(run("simulate", &cfg, &sim).status.code(), Some(0));
    let data_csv = sim.join("data.csv");
    assert!(std::fs::read_to_string(&data_csv).unwrap().starts_with("# idtool "));

    let from_csv = write_config(
        dir.path(),
        "from_csv.json",
        r#"{"model": {"interval": {"theta_resolution": [9, 9], "latent_step": 0.1}}, "data": {"csv": "sim/data.csv"}}"#,
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run("scan", &cfg, &a).status.code(), Some(0));
    assert_eq!(run("scan", &from_csv, &b).status.code(), Some(0));
    let body = |p: PathBuf| std::fs::read_to_string(p).unwrap().lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(body(a.join("verdicts.csv")), body(b.join("verdicts.csv")));
    assert!(std::fs::read_to_string(b.join("verdicts.csv")).unwrap().contains("seed=none"));
}

#[test]
fn simulate_needs_a_simulation_block() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"model": {"interval": {}}, "data": {"csv": "missing.csv"}}"#);
    assert_eq!(run("simulate", &cfg, &dir.path().join("out")).status.code(), Some(1));
}

#[test]
fn reduce_dagger_finds_a_certificate() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "dagger.json", DAGGER);
    let out = dir.path().join("out");
    let o = run("reduce", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out.join("reduction.json"));
    assert!(r["report"]["reducible"].as_u64().unwrap() > 0);
    let ds = &r["double_scan"];
    assert_eq!(ds["points"], 81);
    assert_eq!(ds["agree"], 81);
    assert!(out.join("reduction_scan.csv").exists());
}

#[test]
fn reduce_proper_finds_nothing_inside() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "proper.json", PROPER);
    let out = dir.path().join("out");
    assert_eq!(run("reduce", &cfg, &out).status.code(), Some(0));
    let r = json(&out.join("reduction.json"));
    for e in r["report"]["entries"].as_array().unwrap() {
        if e["on_boundary"] == false {
            assert!(e["certificate"].is_null(), "{e}");
        }
    }
    assert!(r["double_scan"].is_null());
}

#[test]
fn reduce_without_latent_moments_is_vacuous() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "gmm.json",
        r#"{"model": {"location": {"pure_gmm": true}}, "data": {"simulate": {"points": [0, 1]}}}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run("reduce", &cfg, &out).status.code(), Some(0));
    assert_eq!(json(&out.join("reduction.json"))["report"]["vacuous"], true);
}

#[test]
fn expected_entrants_stay_within_the_firm_count() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "cf.json",
        r#"{"model": {"entry": {"resolution": 5}},
            "data": {"simulate": {"seed": 3}},
            "counterfactual": {"case": {"shift_x": {"maps": [{"scale": 1.0, "shift": [0.5]}, {"scale": 1.0, "shift": [0.0]}]}},
                               "target": "expected_entrants", "max_thetas": 6}}"#,
    );
    let out = dir.path().join("out");
    let o = run("counterfactual", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out.join("intervals.json"));
    let entries = r["entries"].as_array().unwrap();
    assert!(!entries.is_empty());
    for e in entries {
        for i in e["intervals"].as_array().unwrap() {
            let (lo, hi) = (i["lower"].as_f64().unwrap(), i["upper"].as_f64().unwrap());
            assert!(-1e-9 <= lo && lo <= hi && hi <= 2.0 + 1e-9, "{i}");
        }
    }
    assert_eq!(r["union"][0]["thetas"], entries.len());
}

#[test]
fn counterfactuals_need_the_entry_model() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "cf.json",
        r#"{"model": {"interval": {}}, "data": {"simulate": {"seed": 1}},
            "counterfactual": {"case": "merger", "target": "expected_entrants"}}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run("counterfactual", &cfg, &out).status.code(), Some(1));
    assert_eq!(json(&out.join("diagnostics.json"))["error"]["kind"], "not_supported");
}
