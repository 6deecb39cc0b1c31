use serde::Serialize;

use super::{energy_snapshot, EnergySnapshot, TheoremConstants, TheoremMode};
use crate::error::{usage, Error, Result};
use crate::integrator::{Flow, Trajectory};
use crate::model::ModelParams;
use crate::spectral::SpectralOperator;

/// Default tolerance on the relative violation of each inequality.
pub const AUDIT_TOL: f64 = 1e-3;

/// Maximum relative violation of one inequality over a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityCheck {
    pub name: &'static str,
    /// `max (lhs - rhs)/|rhs|` over all nondegenerate samples, floored at 0.
    pub max_violation: f64,
    /// Same, restricted to samples where the hypotheses hold.
    pub max_violation_in_scope: f64,
    pub worst_t: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub epsilon: f64,
    pub eps0: f64,
    pub epsilon_ok: bool,
    /// `max k_ratio(t)(1+t)^p / K`; the hypothesis asks for at most 1.
    pub k_ratio_peak: f64,
    /// First sample where the `k_ratio` bound fails, if any.
    pub k_ratio_first_violation: Option<f64>,
}

impl HypothesisCheck {
    pub fn holds(&self) -> bool {
        self.epsilon_ok && self.k_ratio_first_violation.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditVerdict {
    Passed,
    /// An inequality failed where its hypotheses hold.
    Failed,
    /// No in-scope failure, but the hypotheses do not hold on the whole run.
    HypothesesViolated,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub mode: TheoremMode,
    pub audit_tol: f64,
    pub checks: Vec<InequalityCheck>,
    pub hypotheses: HypothesisCheck,
    pub degenerate_samples: usize,
    pub verdict: AuditVerdict,
}

impl AuditReport {
    pub fn check(&self, name: &str) -> Option<&InequalityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Tracker {
    name: &'static str,
    all: f64,
    in_scope: f64,
    worst_t: f64,
}

impl Tracker {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            all: 0.0,
            in_scope: 0.0,
            worst_t: 0.0,
        }
    }

    fn record(&mut self, t: f64, lhs: f64, rhs: f64, in_scope: bool) {
        let v = ((lhs - rhs) / rhs.abs().max(f64::MIN_POSITIVE)).max(0.0);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v > self.all {
            self.all = v;
            self.worst_t = t;
        }
        if in_scope {
            self.in_scope = self.in_scope.max(v);
        }
    }

    fn finish(self, tol: f64) -> InequalityCheck {
        InequalityCheck {
            name: self.name,
            max_violation: self.all,
            max_violation_in_scope: self.in_scope,
            worst_t: self.worst_t,
            passed: self.in_scope <= tol,
        }
    }
}

/// Checks the a-priori estimates along a hyperbolic trajectory.
///
/// The trajectory must carry audit integrals. Every inequality is evaluated
/// at every nondegenerate sample. A sample is in scope while `ε ≤ ε₀` and the
/// bound `k_ratio ≤ K/(1+t)^p` has held at all earlier samples.
pub fn check_apriori(
    params: &ModelParams,
    op: &SpectralOperator,
    traj: &Trajectory,
    consts: &TheoremConstants,
    mode: TheoremMode,
    audit_tol: f64,
) -> Result<AuditReport> {
    if traj.flow != Flow::Hyperbolic {
        return Err(usage("a-priori audit needs a hyperbolic trajectory"));
    }
    if mode != consts.mode {
        return Err(Error::Mode(format!(
            "constants were computed for {:?} mode",
            consts.mode
        )));
    }
    let first = traj.samples.first().ok_or_else(|| usage("empty trajectory"))?;
    if first.t != 0.0 {
        return Err(usage("audit needs the trajectory to start at t = 0"));
    }
    if traj.integrals.iter().any(|i| i.audit.is_none()) {
        return Err(usage("trajectory was integrated without audit integrals"));
    }
    let snaps: Vec<EnergySnapshot> = traj
        .samples
        .iter()
        .map(|s| energy_snapshot(params, op, s))
        .collect::<Result<_>>()?;
    let s0 = &snaps[0];
    if s0.degenerate {
        return Err(Error::Precondition("initial state is degenerate".into()));
    }
    let (f0, p0, q0, r0, g0) = (
        s0.f.unwrap(),
        s0.p.unwrap(),
        s0.q.unwrap(),
        s0.r.unwrap(),
        s0.g.unwrap(),
    );
    let p = params.p;
    let beta = consts.beta;
    let epsilon_ok = params.epsilon <= consts.eps0;

    let mut est_f = Tracker::new("f_dissipation");
    let mut est_p = Tracker::new("p_nonincreasing");
    let mut est_q = Tracker::new("q_growth");
    let mut est_r = Tracker::new("r_growth");
    let mut est_g = Tracker::new("forcing_integral");
    let mut lower = Tracker::new("a12u2_lower_bound");
    let mut upper = Tracker::new("a12u2_upper_bound");
    let mut first_order = Tracker::new("h_first_order");
    let mut second_order = Tracker::new("f_second_order");
    let mut derivative = Tracker::new("g_derivative");

    let mut k_peak: f64 = 0.0;
    let mut k_violation = None;
    let mut degenerate_samples = 0;

    for (e, integ) in snaps.iter().zip(&traj.integrals) {
        if e.degenerate {
            degenerate_samples += 1;
            continue;
        }
        let t = e.t;
        let s = 1.0 + t;
        let k_scaled = e.k_ratio.unwrap() * s.powf(p) / consts.k;
        k_peak = k_peak.max(k_scaled);
        if k_scaled > 1.0 && k_violation.is_none() {
            k_violation = Some(t);
        }
        let in_scope = epsilon_ok && k_violation.is_none();
        let a = integ.audit.expect("checked above");
        let w = e.norm_a12u2;

        est_f.record(t, e.f.unwrap() + a.f_dissipation, f0, in_scope);
        est_p.record(t, e.p.unwrap(), p0, in_scope);
        est_q.record(t, e.q.unwrap(), q0 + 4.0 * p0 * s.powf(2.0 * p), in_scope);
        est_r.record(
            t,
            s.powf(2.0 * p) * e.r.unwrap() + a.r_dissipation,
            (r0 + 2.0 * (consts.k + 1.0) * p0) * s.powf(p + 1.0),
            in_scope,
        );
        est_g.record(t, a.g_forcing.abs(), consts.sigma0 * s.powf(p + 1.0), in_scope);
        let floor = consts.sigma1 / s.powf(beta);
        lower.record(t, floor, w, in_scope);
        match mode {
            TheoremMode::Coercive => {
                let ceiling = consts.sigma2.expect("coercive constants carry sigma2") / s.powf(beta);
                upper.record(t, w, ceiling, in_scope);
            }
            TheoremMode::Noncoercive => {
                first_order.record(
                    t,
                    s.powf(p + 1.0) * e.h + e.norm_u2 + a.h_dissipation,
                    consts.sigma3,
                    in_scope,
                );
                second_order.record(
                    t,
                    s.powf(beta) * e.f.unwrap() + 0.5 * s.powf(-beta) * a.fep_dissipation,
                    consts.sigma4,
                    in_scope,
                );
                derivative.record(t, e.g.unwrap(), g0 + 16.0 * consts.sigma4 * s.powf(2.0 * p), in_scope);
            }
        }
    }

    let mut trackers = vec![est_f, est_p, est_q, est_r, est_g, lower];
    match mode {
        TheoremMode::Coercive => trackers.push(upper),
        TheoremMode::Noncoercive => trackers.extend([first_order, second_order, derivative]),
    }
    let checks: Vec<InequalityCheck> = trackers.into_iter().map(|t| t.finish(audit_tol)).collect();
    let hypotheses = HypothesisCheck {
        epsilon: params.epsilon,
        eps0: consts.eps0,
        epsilon_ok,
        k_ratio_peak: k_peak,
        k_ratio_first_violation: k_violation,
    };
    let verdict = if !checks.iter().all(|c| c.passed) {
        AuditVerdict::Failed
    } else if !hypotheses.holds() {
        AuditVerdict::HypothesesViolated
    } else {
        AuditVerdict::Passed
    };
    Ok(AuditReport {
        mode,
        audit_tol,
        checks,
        hypotheses,
        degenerate_samples,
        verdict,
    })
}
