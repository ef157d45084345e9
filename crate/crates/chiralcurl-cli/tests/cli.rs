use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const STAR_222: &str = "[[2,2,2],[3,2,2],[1,2,2],[2,3,2],[2,1,2],[2,2,3],[2,2,1]]";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chiralcurl")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn cubic(n: usize, k: &str, nodes: &str, extra: &str) -> String {
    format!(
        r#"{{"lattice": {{"kind": "simple_cubic", "n": [{n},{n},{n}], "k_frac": {k}}},
  "material": {{"eps_i": 13.0, "eps_o": 1.0, "nodes": {nodes}}}{extra}}}"#
    )
}

fn cmd(sub: &str, cfg: &Path, out: &Path) -> Output {
    run(&[sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn verify_passes_on_the_reference_grid() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.json", &cubic(4, "[0.3,0.2,0.1]", "[[3,3,3],[4,3,3],[2,3,3],[3,4,3],[3,2,3],[3,3,4],[3,3,2]]", ""));
    let o = cmd("verify", &cfg, &d.path().join("out"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = json(&d.path().join("out/verify.json"));
    assert_eq!(r["pass"], Value::Bool(true));
    assert_eq!(r["checks"].as_array().unwrap().len(), 12);
    assert_eq!(r["provenance"]["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["provenance"]["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn zero_bloch_vector_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.json", &cubic(3, "[0,0,0]", "[[2,2,2]]", ""));
    let o = cmd("verify", &cfg, &d.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nonzero Bloch vector"), "{}", stderr(&o));
    assert!(!d.path().join("out/verify.json").exists());
}

#[test]
fn coinciding_tau_is_perturbed_and_reported() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.json", &cubic(3, "[0.3,0.2,0.1]", "[[2,2,2]]", r#", "tau": [1.0, 2.0, 2.0]"#));
    let o = cmd("verify", &cfg, &d.path().join("out"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = json(&d.path().join("out/verify.json"));
    assert_eq!(r["tau_perturbed"], Value::Bool(true));
    assert_eq!(r["tau"][2].as_f64(), Some(3.0));
}

#[test]
fn malformed_config_reports_position_or_field() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.json", "{\n  \"lattice\": {\"kind\": \"simple_cubic\",\n  \"n\": [3,3,3] \"k_frac\": [0.1,0.1,0.1]}\n}");
    let o = cmd("verify", &cfg, &d.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let cfg = write_config(d.path(), "u.json", &cubic(3, "[0.1,0.1,0.1]", "[]", r#", "colour": 1"#));
    let o = cmd("verify", &cfg, &d.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));

    let cfg = write_config(d.path(), "s.json", &cubic(3, "[0.1,0.1,0.1]", "[]", r#", "sweep": {"gamma_min": 1.0, "gamma_max": 2.0, "steps": 1}"#));
    let o = cmd("sweep", &cfg, &d.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sweep.steps"), "{}", stderr(&o));

    let o = run(&["verify"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dimension_cap_exit_code() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.json", &cubic(4, "[0.3,0.2,0.1]", "[[2,2,2]]", r#", "max_dim": 100"#));
    let o = cmd("verify", &cfg, &d.path().join("out"));
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("exceeds the cap"));
}

#[test]
fn sweep_below_critical_has_no_events() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.json", &cubic(3, "[0.3,0.2,0.1]", STAR_222, r#", "sweep": {"gamma_min": 1.0, "gamma_max": 3.0, "steps": 5}"#));
    let out = d.path().join("out");
    let o = cmd("sweep", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(out.join("events.json")).unwrap(), "[]\n");
    let csv = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("gamma,curve_id,re,im,type"));
    let meta = json(&out.join("sweep_meta.json"));
    assert_eq!(meta["n_events"].as_u64(), Some(0));
    assert_eq!(meta["trivial_zeros"].as_u64(), Some(54));
}

#[test]
fn straddling_sweep_is_deterministic_and_finds_birth_and_split() {
    let d = tempfile::tempdir().unwrap();
    let nodes = "[[2,2,2],[3,2,2],[1,2,2],[2,3,2],[2,1,2],[2,2,3],[2,2,1],[3,3,2]]";
    let cfg = write_config(d.path(), "c.json", &cubic(3, "[0.3,0.2,0.1]", nodes, r#", "sweep": {"gamma_min": 3.55, "gamma_max": 4.1, "steps": 12}"#));
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    for out in [&a, &b] {
        let o = cmd("sweep", &cfg, out);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["curves.csv", "events.json", "sweep_meta.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let ev = json(&a.join("events.json"));
    let kinds: Vec<&str> = ev.as_array().unwrap().iter().map(|e| e["kind"].as_str().unwrap()).collect();
    assert!(kinds.contains(&"imaginary_birth"), "{kinds:?}");
    assert!(kinds.contains(&"collision_split"), "{kinds:?}");
    let split = ev.as_array().unwrap().iter().find(|e| e["kind"] == "collision_split").unwrap();
    let [lo, hi] = [0, 1].map(|i| split["bracket"][i].as_f64().unwrap());
    assert!(hi - lo <= 1e-9);
    assert!(split["location"]["re"].is_f64() && split["location"]["im"].is_f64());
    // leftover temporary files would mean a non-atomic write
    assert!(std::fs::read_dir(&a).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().starts_with('.')));
}

#[test]
fn analyze_reports_certificates() {
    let d = tempfile::tempdir().unwrap();
    let empty = write_config(d.path(), "e.json", &cubic(4, "[0.3,0.2,0.1]", "[]", ""));
    let o = cmd("analyze", &empty, &d.path().join("e"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = json(&d.path().join("e/certificate.json"));
    let c = &r["certificate"];
    assert_eq!(c["is_regular"], Value::Bool(true));
    assert_eq!(c["census"]["count_infinite"].as_u64(), Some(0));
    assert_eq!(c["census"]["count_defective"].as_u64(), Some(0));

    let interior = write_config(d.path(), "i.json", &cubic(4, "[0.3,0.2,0.1]", STAR_222, ""));
    let o = cmd("analyze", &interior, &d.path().join("i"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = json(&d.path().join("i/certificate.json"));
    assert_eq!(r["certificate"]["jordan"]["has_defective_infinity"], Value::Bool(true));
    assert_eq!(r["n_interior"].as_u64(), Some(1));

    let sphere = write_config(
        d.path(),
        "s.json",
        r#"{"lattice": {"kind": "simple_cubic", "n": [6,6,6], "k_frac": [0.3,0.2,0.1]},
            "material": {"eps_i": 13.0, "eps_o": 1.0, "shapes": [{"shape": "sphere", "center": [0.5,0.5,0.5], "radius": 0.2}]}}"#,
    );
    let o = cmd("analyze", &sphere, &d.path().join("s"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = json(&d.path().join("s/certificate.json"));
    assert_eq!(r["certificate"]["geometry"]["regularity_guaranteed"], Value::Bool(true));
    assert_eq!(r["certificate"]["dim_intersection"].as_u64(), Some(0));
}

#[test]
fn nfgep_and_run_follow_the_task_list() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.json", &cubic(3, "[0.3,0.2,0.1]", "[[2,2,2]]", r#", "gammas": [0.5, 2.0], "tasks": ["nfgep", "analyze"]"#));
    let out = d.path().join("out");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = json(&out.join("nfgep.json"));
    let s = r["samples"].as_array().unwrap();
    assert_eq!(s.len(), 2);
    assert_eq!(s[0]["dim"].as_u64(), Some(4 * 27));
    assert_eq!(s[0]["values"].as_array().unwrap().len(), 4 * 27);
    assert!(out.join("certificate.json").exists());
    assert!(!out.join("verify.json").exists());
}

#[test]
fn output_dir_from_config() {
    let d = tempfile::tempdir().unwrap();
    let target = d.path().join("from_cfg");
    let body = cubic(3, "[0.3,0.2,0.1]", "[[2,2,2]]", &format!(r#", "output_dir": {:?}"#, target.to_str().unwrap()));
    let cfg = write_config(d.path(), "c.json", &body);
    let o = run(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(target.join("certificate.json").exists());
}
