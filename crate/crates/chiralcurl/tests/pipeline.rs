use chiralcurl::commands::{cmd_analyze, cmd_nfgep, cmd_sweep, cmd_verify, exit_code, CURVES_FILE, EVENTS_FILE};
use chiralcurl::continuation::{detect_events, sweep, EventKind, SweepOptions};
use chiralcurl::io::RunConfig;
use chiralcurl::par::Execution;
use chiralcurl::{fixtures, Discretization, Error, LatticeSpec, MaterialMask};

fn config(extra: &str) -> RunConfig {
    RunConfig::from_json(&format!(
        r#"{{"lattice": {{"kind": "simple_cubic", "n": [3,3,3], "k_frac": [0.3,0.2,0.1]}},
            "material": {{"eps_i": 13.0, "eps_o": 1.0, "nodes": [[2,2,2],[3,2,2],[1,2,2],[2,3,2],[2,1,2],[2,2,3],[2,2,1]]}}{extra}}}"#
    ))
    .unwrap()
}

#[test]
fn sequential_and_parallel_sweeps_agree_exactly() {
    let d = Discretization::new(LatticeSpec::simple_cubic([3, 3, 3], fixtures::K_FRAC).unwrap()).unwrap();
    let m = MaterialMask::from_nodes(d.spec().index_map(), &fixtures::star_nodes([2, 2, 2]), 13.0, 1.0).unwrap();
    let grid: Vec<f64> = (0..7).map(|i| 3.4 + 0.1 * i as f64).collect();
    let par = sweep(&d, &m, &grid, SweepOptions { exec: Execution::Parallel, ..Default::default() }).unwrap();
    let seq = sweep(&d, &m, &grid, SweepOptions { exec: Execution::Sequential, ..Default::default() }).unwrap();
    assert_eq!(par.to_csv().unwrap(), seq.to_csv().unwrap());
    let ev = detect_events(&par);
    assert_eq!(ev.iter().filter(|e| e.kind == EventKind::ImaginaryBirth).count(), 1);
}

#[test]
fn commands_write_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(r#", "sweep": {"gamma_min": 1.0, "gamma_max": 3.5, "steps": 6}, "gammas": [1.0, 4.0]"#);
    let v = cmd_verify(&cfg, dir.path()).unwrap();
    assert!(v.pass, "{:?}", v.checks);
    let (meta, events) = cmd_sweep(&cfg, dir.path()).unwrap();
    assert!(events.is_empty());
    assert_eq!(meta.provenance.config_hash, cfg.hash());
    let csv = std::fs::read_to_string(dir.path().join(CURVES_FILE)).unwrap();
    // every sample lists all 6n eigenvalues, trivial zeros included
    assert_eq!(meta.n_curves + meta.trivial_zeros, 6 * 27);
    assert_eq!(csv.lines().count(), 1 + meta.n_samples * 6 * 27);
    assert_eq!(std::fs::read_to_string(dir.path().join(EVENTS_FILE)).unwrap(), "[]\n");
    let a = cmd_analyze(&cfg, dir.path()).unwrap();
    assert_eq!(a.n_interior, 1);
    assert!(a.certificate.jordan.nullity >= 1);
    let nf = cmd_nfgep(&cfg, dir.path()).unwrap();
    assert_eq!(nf.samples.len(), 2);
    assert_eq!(nf.samples[0].nonreal, 0);
    assert!(nf.samples[1].nonreal > 0);
}

#[test]
fn error_classes_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(r#", "max_dim": 10"#);
    let e = cmd_verify(&cfg, dir.path()).unwrap_err();
    assert!(matches!(e, Error::DimensionCap { .. }));
    assert_eq!(exit_code(&e), 3);
    let e = RunConfig::from_json("{").unwrap_err();
    assert_eq!(exit_code(&e), 2);
    let cfg = config(r#", "gammas": [3.605551275463989]"#);
    let e = cmd_nfgep(&cfg, dir.path()).unwrap_err();
    assert!(matches!(e, Error::CriticalGamma(_)), "{e}");
    assert_eq!(exit_code(&e), 2);
    assert_eq!(exit_code(&Error::Solver("x".into())), 1);
}
