//! Long-horizon integration of the hyperbolic problem and its parabolic limit.
//!
//! Both flows run on the adaptive Dormand–Prince engine in [`dopri`]. A run
//! stops early when `|A^{1/2}u|²` falls below the degeneracy floor or when
//! `|A^{1/2}u'|² + |Au|²` exceeds the blow-up ceiling; these are the two ways
//! a local solution can fail to continue.
//!
//! Along hyperbolic runs the integrator also carries running integrals as
//! extra (uncontrolled) components of the state, so energy identities and
//! a-priori inequalities can be checked against quadratures that are as
//! accurate as the trajectory itself.

pub mod dopri;

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::model::{hyperbolic_accel, parabolic_velocity, ModelParams, PhaseState};
use crate::spectral::{weighted_sq, SpectralOperator, StateVector};

pub use dopri::{OdeSystem, SolverStats, Tolerances};

/// How output times are laid out on `[0, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampling {
    /// `points` times uniform in `log(1+t)`, from `0` to `t_end` inclusive.
    LogGrid { points: usize },
    /// `0, dt, 2dt, …` up to and including `t_end`.
    Uniform { dt_out: f64 },
}

impl Sampling {
    pub fn times(&self, t_end: f64) -> Result<Vec<f64>> {
        match *self {
            Sampling::LogGrid { points } => {
                if points < 2 {
                    return Err(usage("log grid needs at least 2 points"));
                }
                let top = (1.0 + t_end).ln();
                let mut ts: Vec<f64> = (0..points)
                    .map(|i| (top * i as f64 / (points - 1) as f64).exp_m1())
                    .collect();
                ts[0] = 0.0;
                ts[points - 1] = t_end;
                ts.dedup_by(|a, b| *a <= *b);
                Ok(ts)
            }
            Sampling::Uniform { dt_out } => {
                if !(dt_out > 0.0) {
                    return Err(usage("uniform sampling needs dt_out > 0"));
                }
                let n = (t_end / dt_out).floor() as usize;
                let mut ts: Vec<f64> = (0..=n).map(|i| i as f64 * dt_out).collect();
                if t_end - ts[n] > 1e-9 * dt_out {
                    ts.push(t_end);
                } else {
                    ts[n] = t_end;
                }
                Ok(ts)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationSpec {
    pub t_end: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub sampling: Sampling,
    pub max_steps: u64,
    /// Threshold for `|A^{1/2}u|²` below which the run is declared degenerate.
    pub degeneracy_floor: f64,
    /// Threshold for `|A^{1/2}u'|² + |Au|²` above which the run is declared blown up.
    pub blowup_ceiling: f64,
    /// Reject initial data with `A^{1/2}u₀ = 0`.
    pub require_nondegenerate: bool,
    /// Carry the running integrals used by the a-priori audit.
    pub audit_integrals: bool,
}

impl IntegrationSpec {
    pub fn new(t_end: f64) -> Self {
        Self {
            t_end,
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            sampling: Sampling::LogGrid { points: 400 },
            max_steps: 50_000_000,
            degeneracy_floor: 1e-240,
            blowup_ceiling: 1e12,
            require_nondegenerate: true,
            audit_integrals: false,
        }
    }

    pub fn tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn allow_degenerate(mut self) -> Self {
        self.require_nondegenerate = false;
        self
    }

    pub fn with_audit_integrals(mut self) -> Self {
        self.audit_integrals = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(usage(format!("t_end must be positive, got {}", self.t_end)));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(usage("tolerances must be positive"));
        }
        if !(self.degeneracy_floor > 0.0) {
            return Err(usage("degeneracy floor must be positive"));
        }
        if self.max_steps == 0 {
            return Err(usage("max_steps must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    ReachedEnd,
    /// `|A^{1/2}u|²` dropped below the floor at `t`.
    Degenerate {
        t: f64,
    },
    /// `|A^{1/2}u'|² + |Au|²` exceeded the ceiling at `t`.
    BlowUp {
        t: f64,
    },
    /// `max_steps` accepted steps were taken, last one ending at `t`.
    StepLimit {
        t: f64,
    },
}

impl Termination {
    pub fn reached_end(&self) -> bool {
        matches!(self, Termination::ReachedEnd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flow {
    Hyperbolic,
    Parabolic,
}

/// Integrals over `[0, t]` accumulated along a hyperbolic run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningIntegrals {
    /// `∫ b |u'|²`.
    pub dissipation: f64,
    /// `∫ b`.
    pub damping: f64,
    pub audit: Option<AuditIntegrals>,
}

/// The integral terms appearing in the a-priori inequalities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditIntegrals {
    /// `∫ (1+s)^{-p} |A^{1/2}u'|² / |A^{1/2}u|^{2γ}`.
    pub f_dissipation: f64,
    /// `∫ (1+s)^{p} |A^{1/2}u'|² / |A^{1/2}u|^{2γ+2}`.
    pub r_dissipation: f64,
    /// `∫ (1+s)^{p} <u'', Au> / |A^{1/2}u|^{2γ+2}`.
    pub g_forcing: f64,
    /// `∫ (1+s) |u'|²`.
    pub h_dissipation: f64,
    /// `∫ (1+s)^{2β-p} |A^{1/2}u'|² / |A^{1/2}u|^{2γ}` with `β = (p+1)/γ`.
    pub fep_dissipation: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub flow: Flow,
    /// States at the requested output times (velocity is `u'` for both flows).
    pub samples: Vec<PhaseState>,
    /// Running integrals at each sample; all zero for parabolic runs.
    pub integrals: Vec<RunningIntegrals>,
    pub termination: Termination,
    pub stats: SolverStats,
}

impl Trajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    pub fn last(&self) -> &PhaseState {
        self.samples.last().expect("trajectory always holds the initial sample")
    }
}

const N_AUDIT: usize = 5;

struct HyperbolicSystem<'a> {
    params: &'a ModelParams,
    lambda: &'a [f64],
    audit: bool,
}

impl HyperbolicSystem<'_> {
    fn n(&self) -> usize {
        self.lambda.len()
    }
}

impl OdeSystem for HyperbolicSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.n() + 2 + if self.audit { N_AUDIT } else { 0 }
    }

    fn controlled(&self) -> usize {
        2 * self.n()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.n();
        let (u, rest) = y.split_at(n);
        let v = &rest[..n];
        let (du, drest) = dy.split_at_mut(n);
        du.copy_from_slice(v);
        let (dv, dq) = drest.split_at_mut(n);
        hyperbolic_accel(self.params, self.lambda, t, u, v, dv);
        let b = self.params.b(t);
        dq[0] = b * v.iter().map(|x| x * x).sum::<f64>();
        dq[1] = b;
        if self.audit {
            let w = weighted_sq(self.lambda, u, 1.0);
            let dq = &mut dq[2..];
            if w > 0.0 {
                let g = self.params.gamma;
                let p = self.params.p;
                let a12v = weighted_sq(self.lambda, v, 1.0);
                let acc_au: f64 = self
                    .lambda
                    .iter()
                    .zip(u)
                    .zip(dv.iter())
                    .map(|((l, x), a)| l * x * a)
                    .sum();
                let beta = (p + 1.0) / g;
                let s = 1.0 + t;
                let wg = w.powf(g);
                dq[0] = s.powf(-p) * a12v / wg;
                dq[1] = s.powf(p) * a12v / (wg * w);
                dq[2] = s.powf(p) * acc_au / (wg * w);
                dq[3] = s * v.iter().map(|x| x * x).sum::<f64>();
                dq[4] = s.powf(2.0 * beta - p) * a12v / wg;
            } else {
                dq.fill(0.0);
            }
        }
        Ok(())
    }
}

struct ParabolicSystem<'a> {
    params: &'a ModelParams,
    lambda: &'a [f64],
}

impl OdeSystem for ParabolicSystem<'_> {
    fn dim(&self) -> usize {
        self.lambda.len()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        parabolic_velocity(self.params, self.lambda, t, y, dy)
    }
}

fn check_init(op: &SpectralOperator, u: &StateVector, spec: &IntegrationSpec) -> Result<f64> {
    spec.validate()?;
    if u.len() != op.dim() {
        return Err(usage(format!(
            "initial data has {} coefficients but the spectrum has {}",
            u.len(),
            op.dim()
        )));
    }
    let w0 = op.weighted_sq(u, 1.0);
    if spec.require_nondegenerate && !(w0 > 0.0) {
        return Err(Error::Precondition(
            "A^{1/2}u0 = 0: initial data is degenerate (disable the check to integrate anyway)".into(),
        ));
    }
    Ok(w0)
}

enum Stop {
    Degenerate,
    BlowUp,
}

/// Guards shared by both flows: `w` below floor (only once the run started
/// above it) or the second-order energy above the ceiling.
fn guard(spec: &IntegrationSpec, started_above_floor: bool, w: f64, energy: f64) -> Option<Stop> {
    if started_above_floor && w < spec.degeneracy_floor {
        Some(Stop::Degenerate)
    } else if !(energy <= spec.blowup_ceiling) {
        Some(Stop::BlowUp)
    } else {
        None
    }
}

fn termination(finish: dopri::Finish<Stop>) -> Termination {
    match finish {
        dopri::Finish::ReachedEnd => Termination::ReachedEnd,
        dopri::Finish::Stopped(Stop::Degenerate, t) => Termination::Degenerate { t },
        dopri::Finish::Stopped(Stop::BlowUp, t) => Termination::BlowUp { t },
        dopri::Finish::StepLimit(t) => Termination::StepLimit { t },
    }
}

/// Integrates `ε u'' + b u' + m(|A^{1/2}u|²) A u = 0` from `init` over `[init.t, init.t + t_end]`.
pub fn integrate_hyperbolic(
    params: &ModelParams,
    op: &SpectralOperator,
    init: &PhaseState,
    spec: &IntegrationSpec,
) -> Result<Trajectory> {
    params.validate()?;
    let w0 = check_init(op, &init.u, spec)?;
    if init.v.len() != op.dim() {
        return Err(usage("initial velocity dimension does not match the spectrum"));
    }
    let lambda = op.eigenvalues();
    let n = lambda.len();
    let sys = HyperbolicSystem {
        params,
        lambda,
        audit: spec.audit_integrals,
    };
    let mut y0 = Vec::with_capacity(sys.dim());
    y0.extend_from_slice(init.u.coeffs());
    y0.extend_from_slice(init.v.coeffs());
    y0.resize(sys.dim(), 0.0);

    let t0 = init.t;
    let outputs: Vec<f64> = spec.sampling.times(spec.t_end)?.into_iter().map(|t| t0 + t).collect();
    let started_above = w0 >= spec.degeneracy_floor;
    let mut samples = Vec::with_capacity(outputs.len());
    let mut integrals = Vec::with_capacity(outputs.len());
    let tol = Tolerances {
        rel: spec.rel_tol,
        abs: spec.abs_tol,
    };

    let (finish, stats) = dopri::solve(
        &sys,
        t0,
        &y0,
        &outputs,
        tol,
        spec.max_steps,
        |_, y, _| {
            let (u, v) = (&y[..n], &y[n..2 * n]);
            let w = weighted_sq(lambda, u, 1.0);
            let energy = weighted_sq(lambda, v, 1.0) + weighted_sq(lambda, u, 2.0);
            guard(spec, started_above, w, energy)
        },
        |t, y, _| {
            samples.push(PhaseState {
                t,
                u: StateVector::new(y[..n].to_vec()),
                v: StateVector::new(y[n..2 * n].to_vec()),
            });
            let q = &y[2 * n..];
            integrals.push(RunningIntegrals {
                dissipation: q[0],
                damping: q[1],
                audit: spec.audit_integrals.then(|| AuditIntegrals {
                    f_dissipation: q[2],
                    r_dissipation: q[3],
                    g_forcing: q[4],
                    h_dissipation: q[5],
                    fep_dissipation: q[6],
                }),
            });
        },
    )?;

    Ok(Trajectory {
        flow: Flow::Hyperbolic,
        samples,
        integrals,
        termination: termination(finish),
        stats,
    })
}

/// Integrates `b u' + m(|A^{1/2}u|²) A u = 0` from `u0` over `[0, t_end]`.
///
/// The velocity stored in each sample is the parabolic `u'`. After the run,
/// `|A^{1/2}u|²` is audited for monotonic decrease.
pub fn integrate_parabolic(
    params: &ModelParams,
    op: &SpectralOperator,
    u0: &StateVector,
    spec: &IntegrationSpec,
) -> Result<Trajectory> {
    let w0 = check_init(op, u0, spec)?;
    if !(params.gamma > 0.0 && params.p >= 0.0) {
        return Err(usage("invalid model parameters"));
    }
    let lambda = op.eigenvalues();
    let sys = ParabolicSystem { params, lambda };
    let outputs = spec.sampling.times(spec.t_end)?;
    let started_above = w0 >= spec.degeneracy_floor;
    let mut samples = Vec::with_capacity(outputs.len());
    let tol = Tolerances {
        rel: spec.rel_tol,
        abs: spec.abs_tol,
    };

    let (finish, stats) = dopri::solve(
        &sys,
        0.0,
        u0.coeffs(),
        &outputs,
        tol,
        spec.max_steps,
        |_, u, du| {
            let w = weighted_sq(lambda, u, 1.0);
            let energy = weighted_sq(lambda, du, 1.0) + weighted_sq(lambda, u, 2.0);
            guard(spec, started_above, w, energy)
        },
        |t, u, du| {
            samples.push(PhaseState {
                t,
                u: StateVector::new(u.to_vec()),
                v: StateVector::new(du.to_vec()),
            })
        },
    )?;

    let mut prev = f64::INFINITY;
    for s in &samples {
        let w = op.weighted_sq(&s.u, 1.0);
        if w > prev * (1.0 + 1e-12) + f64::MIN_POSITIVE {
            return Err(Error::Numeric(format!(
                "parabolic |A^1/2 u|^2 increased at t = {} ({prev:e} -> {w:e})",
                s.t
            )));
        }
        prev = w;
    }

    let integrals = vec![RunningIntegrals::default(); samples.len()];
    Ok(Trajectory {
        flow: Flow::Parabolic,
        samples,
        integrals,
        termination: termination(finish),
        stats,
    })
}

/// `|u_ε(t) - u(t)|` between the hyperbolic run from `init` and the parabolic
/// run from `init.u`, on the common output grid.
pub fn measure_perturbation_gap(
    params: &ModelParams,
    op: &SpectralOperator,
    init: &PhaseState,
    spec: &IntegrationSpec,
) -> Result<Vec<(f64, f64)>> {
    if init.t != 0.0 {
        return Err(usage("gap measurement starts at t = 0"));
    }
    let hyp = integrate_hyperbolic(params, op, init, spec)?;
    let par = integrate_parabolic(params, op, &init.u, spec)?;
    for (name, traj) in [("hyperbolic", &hyp), ("parabolic", &par)] {
        if !traj.termination.reached_end() {
            return Err(Error::Numeric(format!(
                "{name} run stopped early: {:?}",
                traj.termination
            )));
        }
    }
    Ok(hyp
        .samples
        .iter()
        .zip(&par.samples)
        .map(|(a, b)| (a.t, a.u.distance(&b.u)))
        .collect())
}

/// Initial velocity of the parabolic flow, `-m(|A^{1/2}u₀|²) A u₀ / b(0)`.
pub fn parabolic_initial_velocity(
    params: &ModelParams,
    op: &SpectralOperator,
    u0: &StateVector,
) -> Result<StateVector> {
    crate::model::parabolic_rhs(params, op, 0.0, u0)
}
