use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use crate::energies::{
    check_apriori, compute_constants, energy_balance, energy_snapshot, AuditReport, EnergyBalance, EnergySnapshot,
    TheoremConstants, TheoremMode,
};
use crate::error::{Error, Result};
use crate::integrator::{
    integrate_hyperbolic, integrate_parabolic, measure_perturbation_gap, Flow, SolverStats, Termination, Trajectory,
};
use crate::model::{scalar_parabolic_exact, ModelDescription, ModelParams, PhaseState};
use crate::rates::{
    default_window, fit_power_law, nondecay_check, theoretical_exponents, widest_window, DecayFit, FitMode, NonDecay,
    Quantity, RatePrediction,
};
use crate::spectral::SpectralOperator;

/// Column order of every trajectory CSV.
pub const CSV_COLUMNS: [&str; 17] = [
    "t",
    "norm_u2",
    "norm_a12u2",
    "norm_au2",
    "norm_v2",
    "norm_a12v2",
    "inner_au_v",
    "F",
    "P",
    "Q",
    "R",
    "H",
    "D",
    "Dhat",
    "G",
    "k_ratio",
    "degenerate",
];

/// Allowed relative drift of `H(t) + 2∫b|u'|²`.
pub const ENERGY_TOL: f64 = 1e-6;
/// Allowed error of a one-mode parabolic run against the closed form.
pub const ORACLE_TOL: f64 = 1e-8;

/// Default exponent slack: wider for the envelope-fitted velocity.
pub fn default_fit_tolerance(q: Quantity) -> f64 {
    match q {
        Quantity::V2 => 0.3,
        _ => 0.1,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowSummary {
    pub flow: Flow,
    pub termination: Termination,
    pub samples: usize,
    pub final_t: f64,
    pub final_a12u2: f64,
    pub final_v2: f64,
    /// `min (|u'|² + |A^{1/2}u|²)` over the last fifth of the samples.
    pub tail_floor: f64,
    pub stats: SolverStats,
    pub csv: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitRecord {
    pub quantity: Quantity,
    pub flow: Flow,
    pub fit: Option<DecayFit>,
    pub prediction: Option<RatePrediction>,
    pub tolerance: f64,
    pub passed: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OracleCheck {
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GapSummary {
    pub horizon: f64,
    pub sup_gap: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct WallClock {
    pub total_s: f64,
    pub hyperbolic_s: f64,
    pub parabolic_s: f64,
}

/// Everything needed to reproduce and judge one scenario run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config: ScenarioConfig,
    pub code_version: String,
    pub model: ModelDescription,
    pub theorem_mode: TheoremMode,
    pub constants: Option<TheoremConstants>,
    pub constants_note: Option<String>,
    pub hyperbolic: Option<FlowSummary>,
    pub parabolic: Option<FlowSummary>,
    pub energy_balance: Option<EnergyBalance>,
    pub gap: Option<GapSummary>,
    pub oracle: Option<OracleCheck>,
    pub fits: Vec<FitRecord>,
    pub audit: Option<AuditReport>,
    pub nondecay: Option<NonDecay>,
    pub failures: Vec<String>,
    pub passed: bool,
    pub wall_clock: WallClock,
    pub files: Vec<String>,
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

fn csv_row(s: &EnergySnapshot) -> [String; 17] {
    [
        fmt(s.t),
        fmt(s.norm_u2),
        fmt(s.norm_a12u2),
        fmt(s.norm_au2),
        fmt(s.norm_v2),
        fmt(s.norm_a12v2),
        fmt(s.inner_au_v),
        opt(s.f),
        opt(s.p),
        opt(s.q),
        opt(s.r),
        fmt(s.h),
        fmt(s.d),
        opt(s.dhat),
        opt(s.g),
        opt(s.k_ratio),
        u8::from(s.degenerate).to_string(),
    ]
}

/// Snapshots of every sample; parabolic runs are evaluated at `ε = 0`.
pub fn snapshots(params: &ModelParams, op: &SpectralOperator, traj: &Trajectory) -> Result<Vec<EnergySnapshot>> {
    let p = match traj.flow {
        Flow::Hyperbolic => params.clone(),
        Flow::Parabolic => params.with_epsilon(0.0),
    };
    traj.samples.iter().map(|s| energy_snapshot(&p, op, s)).collect()
}

pub fn write_trajectory_csv(path: &Path, snaps: &[EnergySnapshot]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_COLUMNS)?;
    for s in snaps {
        w.write_record(csv_row(s))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `(t, column)` pairs from a trajectory CSV, skipping empty cells.
pub fn read_csv_column(path: &Path, column: &str) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("{} has no `{name}` column", path.display())))
    };
    let (ti, ci) = (find("t")?, find(column)?);
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let cell = rec.get(ci).unwrap_or("");
        if cell.is_empty() {
            continue;
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Data(format!("row {}: cannot parse `{s}` as a number", line + 2)))
        };
        out.push((parse(rec.get(ti).unwrap_or(""))?, parse(cell)?));
    }
    Ok(out)
}

/// Fits one column of a trajectory CSV.
pub fn fit_csv(path: &Path, quantity: Quantity, window: Option<(f64, f64)>, mode: FitMode) -> Result<DecayFit> {
    let data = read_csv_column(path, quantity.column())?;
    let t_end = data
        .last()
        .map(|d| d.0)
        .ok_or_else(|| Error::Data("empty trajectory file".into()))?;
    fit_power_law(&data, window.unwrap_or_else(|| default_window(t_end)), mode)
}

const PLOT_COLUMNS: [&str; 8] = ["norm_a12u2", "norm_au2", "norm_v2", "F", "P", "Q", "R", "H"];

fn write_plots(dir: &Path, tag: &str, snaps: &[EnergySnapshot], files: &mut Vec<String>) -> Result<()> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    let mut script = String::from("set logscale xy\nset xlabel '1+t'\nset key left bottom\n");
    let mut series = Vec::new();
    for name in PLOT_COLUMNS {
        let mut body = String::new();
        for s in snaps {
            let y = match name {
                "norm_a12u2" => Some(s.norm_a12u2),
                "norm_au2" => Some(s.norm_au2),
                "norm_v2" => Some(s.norm_v2),
                "F" => s.f,
                "P" => s.p,
                "Q" => s.q,
                "R" => s.r,
                _ => Some(s.h),
            };
            if let Some(y) = y {
                body.push_str(&format!("{} {}\n", fmt(1.0 + s.t), fmt(y)));
            }
        }
        let file = format!("{tag}_{name}.dat");
        fs::write(plots.join(&file), body)?;
        files.push(format!("plots/{file}"));
        series.push(format!("'{file}' using 1:2 with lines title '{name}'"));
    }
    script.push_str("plot ");
    script.push_str(&series.join(", \\\n     "));
    script.push('\n');
    let name = format!("{tag}.gp");
    fs::write(plots.join(&name), script)?;
    files.push(format!("plots/{name}"));
    Ok(())
}

fn summarize(traj: &Trajectory, op: &SpectralOperator, csv: &str) -> FlowSummary {
    let last = traj.last();
    let n = traj.samples.len();
    let tail_floor = traj.samples[n - (n / 5).max(1)..]
        .iter()
        .map(|s| s.v.norm_sq() + op.weighted_sq(&s.u, 1.0))
        .fold(f64::INFINITY, f64::min);
    FlowSummary {
        flow: traj.flow,
        termination: traj.termination,
        samples: n,
        final_t: last.t,
        final_a12u2: op.weighted_sq(&last.u, 1.0),
        final_v2: last.v.norm_sq(),
        tail_floor,
        stats: traj.stats,
        csv: csv.to_string(),
    }
}

fn fit_record(
    cfg: &ScenarioConfig,
    params: &ModelParams,
    mode: TheoremMode,
    snaps: &[EnergySnapshot],
    flow: Flow,
    q: Quantity,
) -> FitRecord {
    let tolerance = cfg.fit_tolerance.unwrap_or_else(|| default_fit_tolerance(q));
    let data: Vec<(f64, f64)> = snaps
        .iter()
        .map(|s| {
            (
                s.t,
                match q {
                    Quantity::A12u2 => s.norm_a12u2,
                    Quantity::Au2 => s.norm_au2,
                    Quantity::V2 => s.norm_v2,
                },
            )
        })
        .collect();
    let window = cfg
        .fit_window
        .map(|[a, b]| (a, b))
        .unwrap_or_else(|| default_window(cfg.t_end));
    let mut note = None;
    let prediction = match theoretical_exponents(params, mode) {
        Ok(list) => list.into_iter().find(|r| r.quantity == q),
        Err(e) => {
            note = Some(e.to_string());
            None
        }
    };
    let fitted = match cfg.fit_max_residual {
        Some(r) => widest_window(&data, 3.0, q.default_mode(), r),
        None => fit_power_law(&data, window, q.default_mode()),
    };
    match fitted {
        Ok(fit) => {
            let passed = prediction.map_or(true, |r| r.admits(fit.exponent, tolerance));
            FitRecord {
                quantity: q,
                flow,
                fit: Some(fit),
                prediction,
                tolerance,
                passed,
                note,
            }
        }
        Err(e) => FitRecord {
            quantity: q,
            flow,
            fit: None,
            prediction,
            tolerance,
            passed: false,
            note: Some(e.to_string()),
        },
    }
}

/// Runs `cfg` into its resolved output directory.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunManifest> {
    run_scenario_in(cfg, &cfg.resolved_output_dir())
}

/// Runs `cfg`, writing `trajectory*.csv`, `manifest.json` and plot data into `dir`.
///
/// Configuration and I/O problems are errors; integration failures, failed
/// fits and failed audits are recorded in the manifest with `passed = false`.
pub fn run_scenario_in(cfg: &ScenarioConfig, dir: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    cfg.validate()?;
    fs::create_dir_all(dir)?;
    let op = cfg.operator()?;
    let params = cfg.params()?;
    let (u0, u1) = cfg.initial_data()?;
    let mode = cfg.theorem_mode()?;
    let spec = cfg.integration_spec();
    let mut failures = Vec::new();
    let mut files = Vec::new();
    let mut clock = WallClock::default();

    let (constants, constants_note) = if cfg.mode.hyperbolic() {
        match compute_constants(&params, &op, &u0, &u1, mode) {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };

    let mut manifest = RunManifest {
        config: cfg.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        model: params.describe(),
        theorem_mode: mode,
        constants,
        constants_note,
        hyperbolic: None,
        parabolic: None,
        energy_balance: None,
        gap: None,
        oracle: None,
        fits: Vec::new(),
        audit: None,
        nondecay: None,
        failures: Vec::new(),
        passed: false,
        wall_clock: WallClock::default(),
        files: Vec::new(),
    };

    let mut fit_source: Option<(Flow, Vec<EnergySnapshot>)> = None;

    if cfg.mode.parabolic() {
        let t0 = Instant::now();
        match integrate_parabolic(&params, &op, &u0, &spec) {
            Ok(traj) => {
                clock.parabolic_s = t0.elapsed().as_secs_f64();
                let name = if cfg.mode.hyperbolic() {
                    "parabolic.csv"
                } else {
                    "trajectory.csv"
                };
                let snaps = snapshots(&params, &op, &traj)?;
                write_trajectory_csv(&dir.join(name), &snaps)?;
                files.push(name.to_string());
                if cfg.plots {
                    write_plots(dir, "parabolic", &snaps, &mut files)?;
                }
                if !traj.termination.reached_end() {
                    failures.push(format!("parabolic run ended early: {:?}", traj.termination));
                }
                if op.dim() == 1 {
                    let (lambda, w0) = (op.eigenvalues()[0], snaps[0].norm_a12u2);
                    let max_rel_err = snaps
                        .iter()
                        .map(|s| {
                            let exact = scalar_parabolic_exact(w0, lambda, params.gamma, params.p, s.t);
                            ((s.norm_a12u2 - exact) / exact).abs()
                        })
                        .fold(0.0, f64::max);
                    let passed = max_rel_err <= ORACLE_TOL;
                    if !passed {
                        failures.push(format!("parabolic oracle error {max_rel_err:e} > {ORACLE_TOL:e}"));
                    }
                    manifest.oracle = Some(OracleCheck {
                        max_rel_err,
                        tolerance: ORACLE_TOL,
                        passed,
                    });
                }
                manifest.parabolic = Some(summarize(&traj, &op, name));
                fit_source = Some((Flow::Parabolic, snaps));
            }
            Err(e) => failures.push(format!("parabolic integration failed: {e}")),
        }
    }

    if cfg.mode.hyperbolic() {
        let t0 = Instant::now();
        let init = PhaseState::new(0.0, u0.clone(), u1.clone())?;
        match integrate_hyperbolic(&params, &op, &init, &spec) {
            Ok(traj) => {
                clock.hyperbolic_s = t0.elapsed().as_secs_f64();
                let snaps = snapshots(&params, &op, &traj)?;
                write_trajectory_csv(&dir.join("trajectory.csv"), &snaps)?;
                files.push("trajectory.csv".into());
                if cfg.plots {
                    write_plots(dir, "hyperbolic", &snaps, &mut files)?;
                }
                if !traj.termination.reached_end() {
                    failures.push(format!("hyperbolic run ended early: {:?}", traj.termination));
                }
                let bal = energy_balance(&params, &op, &traj)?;
                if !(bal.max_residual <= ENERGY_TOL) {
                    failures.push(format!(
                        "energy identity residual {:e} > {ENERGY_TOL:e}",
                        bal.max_residual
                    ));
                }
                manifest.energy_balance = Some(bal);
                if cfg.audit {
                    match manifest.constants.as_ref() {
                        Some(c) => match check_apriori(&params, &op, &traj, c, mode, cfg.audit_tol) {
                            Ok(report) => {
                                if !report.all_passed() {
                                    failures.push(format!("a-priori audit verdict {:?}", report.verdict));
                                }
                                manifest.audit = Some(report);
                            }
                            Err(e) => failures.push(format!("audit failed: {e}")),
                        },
                        None => failures.push(format!(
                            "audit requested but constants are unavailable: {}",
                            manifest.constants_note.as_deref().unwrap_or("unknown")
                        )),
                    }
                }
                if let Some(tail) = cfg.nondecay_tail {
                    match nondecay_check(&params, &op, &traj, tail) {
                        Ok(nd) => {
                            if !nd.passed {
                                failures.push(format!("tail floor {:e} below {:e}", nd.floor, nd.threshold));
                            }
                            manifest.nondecay = Some(nd);
                        }
                        Err(e) => failures.push(format!("non-decay check: {e}")),
                    }
                }
                manifest.hyperbolic = Some(summarize(&traj, &op, "trajectory.csv"));
                fit_source = Some((Flow::Hyperbolic, snaps));
            }
            Err(e) => failures.push(format!("hyperbolic integration failed: {e}")),
        }
    }

    if cfg.mode == super::config::RunMode::Both {
        let init = PhaseState::new(0.0, u0.clone(), u1.clone())?;
        let mut gap_spec = spec.clone();
        gap_spec.t_end = cfg.gap_horizon;
        gap_spec.audit_integrals = false;
        match measure_perturbation_gap(&params, &op, &init, &gap_spec) {
            Ok(gap) => {
                manifest.gap = Some(GapSummary {
                    horizon: cfg.gap_horizon,
                    sup_gap: gap.iter().map(|g| g.1).fold(0.0, f64::max),
                })
            }
            Err(e) => failures.push(format!("gap measurement failed: {e}")),
        }
    }

    if let Some((flow, snaps)) = &fit_source {
        for &q in &cfg.fit {
            let rec = fit_record(cfg, &params, mode, snaps, *flow, q);
            if !rec.passed {
                failures.push(format!("fit of {} failed", q.name()));
            }
            manifest.fits.push(rec);
        }
    }

    clock.total_s = start.elapsed().as_secs_f64();
    files.push("manifest.json".into());
    manifest.failures = failures;
    manifest.passed = manifest.failures.is_empty();
    manifest.wall_clock = clock;
    manifest.files = files;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}
