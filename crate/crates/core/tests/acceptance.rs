//! Acceptance suite. Runs as a plain binary so that each criterion prints one
//! line whether it passes or not; exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use kirchhoff::comparison::suite::run_lemma_suites;
use kirchhoff::energies::{check_apriori, compute_constants, energy_snapshot, AuditVerdict, TheoremMode};
use kirchhoff::integrator::{integrate_hyperbolic, integrate_parabolic, measure_perturbation_gap, Sampling};
use kirchhoff::rates::{fit_power_law, widest_window, FitMode};
use kirchhoff::{IntegrationSpec, ModelParams, PhaseState, SpectralOperator, StateVector, Trajectory};

// criterion 1
const C1_EXPONENT: f64 = 1.5;
const C1_TOL: f64 = 0.1;
const C1_V2_FLOOR: f64 = 3.5 - 0.3;
const C1_SECONDS: f64 = 60.0;
// criterion 2
const C2_SAFETY: f64 = 0.5;
const C2_TAIL: f64 = 0.2;
const C2_SLACK: f64 = 1e-6;
const C2_SECONDS: f64 = 60.0;
// criterion 3
const C3_WINDOW: (f64, f64) = (0.75 - 0.1, 1.5 + 0.1);
const C3_MAX_RESIDUAL: f64 = 0.05;
const C3_SECONDS: f64 = 120.0;
// criterion 4
const C4_TOL: f64 = 1e-8;
const C4_SECONDS: f64 = 10.0;
// criterion 5
const C5_TOL: f64 = 1e-7;
const C5_SECONDS: f64 = 30.0;
// criterion 6
const C6_AUDIT_TOL: f64 = 1e-3;
const C6_P_TOL: f64 = 1e-12;
// criterion 7
const C7_TOL: f64 = 1e-6;
// criterion 8
const C8_FACTOR: f64 = 100.0;

const SAMPLES: usize = 2000;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn squares(n: usize) -> SpectralOperator {
    SpectralOperator::new((1..=n).map(|k| (k * k) as f64).collect()).unwrap()
}

fn series(
    traj: &Trajectory,
    op: &SpectralOperator,
    f: impl Fn(&SpectralOperator, &PhaseState) -> f64,
) -> Vec<(f64, f64)> {
    traj.samples.iter().map(|s| (s.t, f(op, s))).collect()
}

fn a12u2(op: &SpectralOperator, s: &PhaseState) -> f64 {
    op.eigenvalues().iter().zip(s.u.coeffs()).map(|(l, x)| l * x * x).sum()
}

fn au2(op: &SpectralOperator, s: &PhaseState) -> f64 {
    op.eigenvalues()
        .iter()
        .zip(s.u.coeffs())
        .map(|(l, x)| l * l * x * x)
        .sum()
}

fn v2(_: &SpectralOperator, s: &PhaseState) -> f64 {
    s.v.coeffs().iter().map(|x| x * x).sum()
}

/// `H = ε|u'|² + w^{γ+1}/(γ+1)`, written out independently of the library.
fn hand_energy(eps: f64, gamma: f64, op: &SpectralOperator, s: &PhaseState) -> f64 {
    eps * v2(op, s) + a12u2(op, s).powf(gamma + 1.0) / (gamma + 1.0)
}

/// Relative drift of `H(t) + 2∫b|u'|²` with `H` computed by hand.
fn identity_residual(params: &ModelParams, op: &SpectralOperator, traj: &Trajectory) -> f64 {
    let h0 = hand_energy(params.epsilon, params.gamma, op, &traj.samples[0]);
    traj.samples
        .iter()
        .zip(&traj.integrals)
        .map(|(s, acc)| (hand_energy(params.epsilon, params.gamma, op, s) + 2.0 * acc.dissipation - h0).abs() / h0)
        .fold(0.0, f64::max)
}

struct Criterion1 {
    params: ModelParams,
    op: SpectralOperator,
    traj: Trajectory,
    eps0: f64,
    seconds: f64,
}

fn criterion1_run() -> Criterion1 {
    let op = squares(8);
    let u0 = StateVector::basis(8, 0);
    let mut params = ModelParams::prototype(1e-3, 0.5, 1.0).unwrap();
    let consts = compute_constants(&params, &op, &u0, &StateVector::zeros(8), TheoremMode::Coercive).unwrap();
    while params.epsilon > consts.eps0 {
        params = params.with_epsilon(params.epsilon / 2.0);
    }
    let spec = IntegrationSpec::new(1e5)
        .sampling(Sampling::LogGrid { points: SAMPLES })
        .with_audit_integrals();
    let start = Instant::now();
    let traj = integrate_hyperbolic(&params, &op, &PhaseState::at_rest(u0), &spec).unwrap();
    Criterion1 {
        params,
        op,
        traj,
        eps0: consts.eps0,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn criterion1(c: &Criterion1) -> Outcome {
    let window = (1e2, 1e5);
    let fa = fit_power_law(&series(&c.traj, &c.op, a12u2), window, FitMode::PointFit).unwrap();
    let fb = fit_power_law(&series(&c.traj, &c.op, au2), window, FitMode::PointFit).unwrap();
    let fv = fit_power_law(&series(&c.traj, &c.op, v2), window, FitMode::EnvelopeFit).unwrap();
    let passed = c.traj.termination.reached_end()
        && c.params.epsilon <= c.eps0
        && (fa.exponent - C1_EXPONENT).abs() <= C1_TOL
        && (fb.exponent - C1_EXPONENT).abs() <= C1_TOL
        && fv.exponent >= C1_V2_FLOOR
        && c.seconds <= C1_SECONDS;
    outcome(
        passed,
        format!(
            "eps={} (eps0={:.4e}) a12u2={:.4} au2={:.4} v2 envelope={:.4} ({:.2} s)",
            c.params.epsilon, c.eps0, fa.exponent, fb.exponent, fv.exponent, c.seconds
        ),
    )
}

fn nondecay_run(p: f64) -> (ModelParams, SpectralOperator, Trajectory, f64) {
    let op = squares(8);
    let params = ModelParams::prototype(0.1, p, 1.0).unwrap();
    let spec = IntegrationSpec::new(1e4).sampling(Sampling::LogGrid { points: SAMPLES });
    let start = Instant::now();
    let traj = integrate_hyperbolic(&params, &op, &PhaseState::at_rest(StateVector::basis(8, 0)), &spec).unwrap();
    (params, op, traj, start.elapsed().as_secs_f64())
}

fn criterion2(params: &ModelParams, op: &SpectralOperator, traj: &Trajectory, seconds: f64) -> Outcome {
    let eps = params.epsilon;
    let h0 = hand_energy(eps, params.gamma, op, &traj.samples[0]);
    // ∫₀^∞ (1+t)^{-2} = 1
    let threshold = C2_SAFETY * h0 * (-2.0 / eps).exp();
    let n = traj.samples.len();
    let tail = &traj.samples[n - (n as f64 * C2_TAIL) as usize..];
    let floor = tail
        .iter()
        .map(|s| v2(op, s) + a12u2(op, s))
        .fold(f64::INFINITY, f64::min);
    let worst = traj
        .samples
        .iter()
        .map(|s| {
            let damping = 1.0 - 1.0 / (1.0 + s.t);
            hand_energy(eps, params.gamma, op, s) - (h0 * (-2.0 / eps * damping).exp() - C2_SLACK)
        })
        .fold(f64::INFINITY, f64::min);
    let passed = traj.termination.reached_end() && floor >= threshold && worst >= 0.0 && seconds <= C2_SECONDS;
    outcome(
        passed,
        format!("tail floor={floor:.4e} >= {threshold:.4e}; min H-margin={worst:.4e} ({seconds:.2} s)"),
    )
}

fn noncoercive_run() -> (ModelParams, SpectralOperator, Trajectory, f64) {
    let op = SpectralOperator::new((1..=32).map(|k| 1.0 / (k * k) as f64).collect()).unwrap();
    let params = ModelParams::prototype(1e-3, 0.5, 1.0).unwrap();
    let spec = IntegrationSpec::new(1e5).sampling(Sampling::LogGrid { points: SAMPLES });
    let start = Instant::now();
    let traj = integrate_hyperbolic(
        &params,
        &op,
        &PhaseState::at_rest(StateVector::new(vec![1.0; 32])),
        &spec,
    )
    .unwrap();
    (params, op, traj, start.elapsed().as_secs_f64())
}

fn criterion3(op: &SpectralOperator, traj: &Trajectory, seconds: f64) -> Outcome {
    match widest_window(&series(traj, op, a12u2), 3.0, FitMode::PointFit, C3_MAX_RESIDUAL) {
        Ok(fit) => outcome(
            traj.termination.reached_end()
                && fit.exponent >= C3_WINDOW.0
                && fit.exponent <= C3_WINDOW.1
                && seconds <= C3_SECONDS,
            format!(
                "a12u2 exponent={:.4} on [{:.3e}, {:.3e}] residual={:.3e} ({seconds:.2} s)",
                fit.exponent, fit.window.0, fit.window.1, fit.residual
            ),
        ),
        Err(e) => outcome(false, format!("no window with residual <= {C3_MAX_RESIDUAL}: {e}")),
    }
}

/// `w(t)` for `w' = -2(1+t)^p w^{γ+1}`, `w(0) = 1`, solved by separation of variables.
fn parabolic_oracle(gamma: f64, p: f64, t: f64) -> f64 {
    let s = ((1.0 + t).powf(p + 1.0) - 1.0) / (p + 1.0);
    (1.0 + 2.0 * gamma * s).powf(-1.0 / gamma)
}

fn criterion4() -> Outcome {
    let start = Instant::now();
    let op = SpectralOperator::new(vec![1.0]).unwrap();
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for (gamma, p) in [(1.0, 0.0), (1.0, 1.0), (2.0, 0.5), (0.5, 0.5)] {
        let params = ModelParams::prototype(1.0, p, gamma).unwrap();
        let traj = integrate_parabolic(&params, &op, &StateVector::new(vec![1.0]), &IntegrationSpec::new(1e6)).unwrap();
        ok &= traj.termination.reached_end();
        for s in &traj.samples {
            let exact = parabolic_oracle(gamma, p, s.t);
            worst = worst.max((s.u.coeffs()[0].powi(2) - exact).abs() / exact);
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    outcome(
        ok && worst <= C4_TOL && seconds <= C4_SECONDS,
        format!("max rel err={worst:.3e} over 4 cases to t=1e6 ({seconds:.2} s)"),
    )
}

fn criterion5() -> Outcome {
    let start = Instant::now();
    let r = run_lemma_suites(42, 1000).unwrap();
    let seconds = start.elapsed().as_secs_f64();
    let worst = r
        .lemma1
        .worst_margin
        .max(r.lemma2_upper.worst_margin)
        .max(r.lemma2_lower.worst_margin);
    let violations = r.lemma1.violations + r.lemma2_upper.violations + r.lemma2_lower.violations;
    outcome(
        r.passed()
            && worst <= 1.0 + C5_TOL
            && r.closed_form_max_rel_err <= C5_TOL
            && r.lemma1.instances == 1000
            && r.lemma2_upper.instances == 1000
            && seconds <= C5_SECONDS,
        format!(
            "violations={violations} worst margin={worst:.9} closed-form err={:.3e} ({seconds:.2} s)",
            r.closed_form_max_rel_err
        ),
    )
}

fn criterion6(c: &Criterion1) -> Outcome {
    let u0 = c.traj.samples[0].u.clone();
    let consts = compute_constants(&c.params, &c.op, &u0, &c.traj.samples[0].v, TheoremMode::Coercive).unwrap();
    let report = check_apriori(&c.params, &c.op, &c.traj, &consts, TheoremMode::Coercive, C6_AUDIT_TOL).unwrap();
    let named = [
        "f_dissipation",
        "p_nonincreasing",
        "q_growth",
        "r_growth",
        "a12u2_lower_bound",
        "a12u2_upper_bound",
    ];
    let failed: Vec<&str> = named
        .iter()
        .copied()
        .filter(|n| !report.check(n).is_some_and(|c| c.passed))
        .collect();
    // the data lie on the first eigenvector, so P ≡ λ₁ = 1
    let p_dev = c
        .traj
        .samples
        .iter()
        .map(|s| (energy_snapshot(&c.params, &c.op, s).unwrap().p.unwrap() - 1.0).abs())
        .fold(0.0, f64::max);
    outcome(
        report.verdict == AuditVerdict::Passed && failed.is_empty() && p_dev <= C6_P_TOL,
        format!("verdict={:?} failed={failed:?} max|P-1|={p_dev:.3e}", report.verdict),
    )
}

fn criterion8(op: &SpectralOperator, slow: &Trajectory, fast: &Trajectory) -> Outcome {
    let (ws, wf) = (a12u2(op, slow.last()), a12u2(op, fast.last()));
    outcome(
        slow.last().t == 1e4 && fast.last().t == 1e4 && wf >= C8_FACTOR * ws,
        format!("w(1e4): p=0.9 -> {ws:.4e}, p=1.5 -> {wf:.4e}, ratio={:.1}", wf / ws),
    )
}

/// The hyperbolic halves of the gap runs, for the energy identity.
fn gap_runs() -> Vec<(ModelParams, Trajectory)> {
    let op = squares(8);
    let init = PhaseState::at_rest(StateVector::basis(8, 0));
    [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&eps| {
            let params = ModelParams::prototype(eps, 0.5, 1.0).unwrap();
            let traj = integrate_hyperbolic(&params, &op, &init, &IntegrationSpec::new(10.0)).unwrap();
            (params, traj)
        })
        .collect()
}

fn criterion9() -> Outcome {
    let op = squares(8);
    let init = PhaseState::at_rest(StateVector::basis(8, 0));
    let gaps: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&eps| {
            let params = ModelParams::prototype(eps, 0.5, 1.0).unwrap();
            measure_perturbation_gap(&params, &op, &init, &IntegrationSpec::new(10.0))
                .unwrap()
                .iter()
                .map(|g| g.1)
                .fold(0.0, f64::max)
        })
        .collect();
    outcome(
        gaps.windows(2).all(|w| w[1] < w[0]),
        format!(
            "sup gap on [0,10] for eps=1e-2,1e-3,1e-4: {}",
            gaps.iter().map(|g| format!("{g:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let c1 = criterion1_run();
    let (p2, op2, t2, s2) = nondecay_run(2.0);
    let (p3, op3, t3, s3) = noncoercive_run();
    let (p8a, _, t8a, _) = nondecay_run(0.9);
    let (p8b, _, t8b, _) = nondecay_run(1.5);
    let mut energy = vec![
        (
            "criterion 1".to_string(),
            identity_residual(&c1.params, &c1.op, &c1.traj),
        ),
        ("criterion 2".to_string(), identity_residual(&p2, &op2, &t2)),
        ("criterion 3".to_string(), identity_residual(&p3, &op3, &t3)),
        (
            "criterion 8".to_string(),
            identity_residual(&p8a, &op2, &t8a).max(identity_residual(&p8b, &op2, &t8b)),
        ),
    ];
    let gaps = gap_runs();
    let gap_worst = gaps
        .iter()
        .map(|(p, t)| identity_residual(p, &op2, t))
        .fold(0.0, f64::max);
    energy.push(("criterion 9".to_string(), gap_worst));
    let worst_energy = energy.iter().map(|e| e.1).fold(0.0, f64::max);

    let results = [
        ("coercive decay rate", criterion1(&c1)),
        ("non-decay for integrable damping", criterion2(&p2, &op2, &t2, s2)),
        ("noncoercive rate window", criterion3(&op3, &t3, s3)),
        ("parabolic closed form", criterion4()),
        ("comparison-bound suites", criterion5()),
        ("a-priori audit", criterion6(&c1)),
        (
            "energy identity",
            outcome(
                worst_energy <= C7_TOL,
                energy
                    .iter()
                    .map(|(n, r)| format!("{n}: {r:.3e}"))
                    .collect::<Vec<_>>()
                    .join(", "),
            ),
        ),
        ("damping threshold contrast", criterion8(&op2, &t8a, &t8b)),
        ("singular-perturbation trend", criterion9()),
    ];
    let mut all = true;
    for (i, (name, o)) in results.iter().enumerate() {
        all &= o.passed;
        println!(
            "criterion {} {:<34} {}  {}",
            i + 1,
            name,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
