use std::fs;
use std::path::Path;

use kirchhoff::harness::{
    parse_config, parse_sweep, read_csv_column, run_scenario_in, run_sweep_in, ScenarioConfig, CSV_COLUMNS,
};
use kirchhoff::Error;

fn scenario(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    fs::read_to_string(path).unwrap()
}

#[test]
fn coercive_preset_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&scenario("coercive.toml")).unwrap();
    let m = run_scenario_in(&cfg, dir.path()).unwrap();
    assert!(m.passed, "{:?}", m.failures);

    let text = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "t,norm_u2,norm_a12u2,norm_au2,norm_v2,norm_a12v2,inner_au_v,F,P,Q,R,H,D,Dhat,G,k_ratio,degenerate"
    );
    assert_eq!(header.split(',').collect::<Vec<_>>(), CSV_COLUMNS);
    let second = text.lines().nth(1).unwrap();
    let t_field = second.split(',').next().unwrap();
    // 17 significant digits: one before the point, sixteen after
    assert_eq!(t_field, "0.0000000000000000e0");
    assert_eq!(text.lines().count(), 1 + 2000);

    let fit = m.fits.iter().find(|f| f.quantity.name() == "a12u2").unwrap();
    assert!((fit.fit.unwrap().exponent - 1.5).abs() < 0.01);
    assert!(m.audit.as_ref().unwrap().all_passed());
    assert!(m.energy_balance.unwrap().max_residual < 1e-9);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    for key in [
        "config",
        "code_version",
        "constants",
        "hyperbolic",
        "fits",
        "audit",
        "wall_clock",
    ] {
        assert!(!manifest[key].is_null(), "manifest lacks {key}");
    }
    assert!(dir.path().join("plots/hyperbolic.gp").exists());
    assert!(dir.path().join("plots/hyperbolic_norm_a12u2.dat").exists());

    let w = read_csv_column(&dir.path().join("trajectory.csv"), "norm_a12u2").unwrap();
    assert_eq!(w[0], (0.0, 1.0));
}

#[test]
fn echoed_config_reruns_bit_identically() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let mut cfg = parse_config(&scenario("noncoercive.toml")).unwrap();
    cfg.t_end = 1e3;
    cfg.u0 = kirchhoff::harness::DataSpec::Preset("random(5)".into());
    run_scenario_in(&cfg, first.path()).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(first.path().join("manifest.json")).unwrap()).unwrap();
    let echo: ScenarioConfig = serde_json::from_value(manifest["config"].clone()).unwrap();
    assert_eq!(echo, cfg);
    run_scenario_in(&echo, second.path()).unwrap();
    let a = fs::read(first.path().join("trajectory.csv")).unwrap();
    let b = fs::read(second.path().join("trajectory.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn parabolic_preset_records_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_scenario_in(&parse_config(&scenario("parabolic_1d.toml")).unwrap(), dir.path()).unwrap();
    let oracle = m.oracle.unwrap();
    assert!(oracle.max_rel_err <= 1e-8, "{}", oracle.max_rel_err);
    assert!(m.passed && m.constants.is_none() && m.hyperbolic.is_none());
    // (p+1)/γ = 0.75
    assert!((m.fits[0].fit.unwrap().exponent - 0.75).abs() < 1e-3);
}

#[test]
fn missing_epsilon_is_reported_by_key() {
    let text = scenario("coercive.toml").replace("epsilon = 1e-3\n", "");
    match parse_config(&text) {
        Err(Error::Config { key, .. }) => assert_eq!(key, "epsilon"),
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn failing_audit_or_fit_sets_passed_false() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = parse_config(&scenario("coercive.toml")).unwrap();
    cfg.t_end = 1e3;
    cfg.fit_window = Some([10.0, 1e3]);
    // far above eps0: hypotheses fail, so the audit cannot pass
    cfg.epsilon = Some(1.0);
    let m = run_scenario_in(&cfg, dir.path()).unwrap();
    assert!(!m.passed);
    assert!(!m.failures.is_empty());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn threshold_sweep_is_ordered_and_contrasting() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = parse_sweep(&scenario("threshold_sweep.toml")).unwrap();
    let report = run_sweep_in(&sweep, dir.path()).unwrap();
    assert!(report.passed());
    let ps: Vec<&str> = report.cells.iter().map(|c| c.overrides[0].1.as_str()).collect();
    assert_eq!(ps, ["0.5", "0.9", "1.5"]);
    let w: Vec<f64> = report.cells.iter().map(|c| c.final_a12u2.unwrap()).collect();
    assert!(w[0] < 1e-6 && w[1] < 1e-7, "{w:?}");
    assert!(w[2] > 100.0 * w[1], "{w:?}");
    let agg = fs::read_to_string(&report.aggregate).unwrap();
    assert!(agg.starts_with("cell,p,passed,termination,final_t,final_a12u2,final_v2,tail_floor,sup_gap,error\n"));
    assert!(dir.path().join("cell_002/manifest.json").exists());

    let again = tempfile::tempdir().unwrap();
    let report2 = run_sweep_in(&sweep, again.path()).unwrap();
    assert_eq!(
        fs::read(dir.path().join("cell_001/trajectory.csv")).unwrap(),
        fs::read(again.path().join("cell_001/trajectory.csv")).unwrap()
    );
    assert_eq!(report2.cells.len(), 3);
}

#[test]
fn gap_sweep_decreases_with_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_sweep_in(&parse_sweep(&scenario("gap_sweep.toml")).unwrap(), dir.path()).unwrap();
    let gaps: Vec<f64> = report.cells.iter().map(|c| c.sup_gap.unwrap()).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn sweep_cells_fail_independently() {
    let dir = tempfile::tempdir().unwrap();
    let text = scenario("threshold_sweep.toml").replace("p = [0.5, 0.9, 1.5]", "gamma = [1.0, -1.0]");
    let report = run_sweep_in(&parse_sweep(&text).unwrap(), dir.path()).unwrap();
    assert!(report.cells[0].passed);
    assert!(!report.cells[1].passed);
    assert!(report.cells[1].error.as_deref().unwrap().contains("gamma"));
    let agg = fs::read_to_string(&report.aggregate).unwrap();
    assert_eq!(agg.lines().count(), 3);
    assert!(agg.lines().nth(2).unwrap().starts_with("1,-1.0,false"));
}

#[test]
fn empty_grid_is_a_usage_error() {
    let text = scenario("threshold_sweep.toml").replace("p = [0.5, 0.9, 1.5]", "p = []");
    assert!(matches!(parse_sweep(&text), Err(Error::Usage(_))));
}
