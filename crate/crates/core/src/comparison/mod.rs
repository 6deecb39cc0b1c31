//! The two scalar comparison principles behind the decay estimates.
//!
//! The first bounds `f ≥ 0` with `f' ≤ -c₁ f/(1+t)^p + c₂ √f` by
//! `f(0) + (c₂/c₁)² (1+t)^{2p}`.
//!
//! The second concerns `w' ≶ -2(1+t)^p w^{γ+1} (α + f)` with a small
//! perturbation `f`. Its reference solution has the closed form
//!
//! ```text
//! z(t) = w(0) (1 + 2γ w(0)^γ Φ(t))^{-1/γ},
//! Φ(t) = α((1+t)^{p+1} - 1)/(p+1) + ∫₀ᵗ (1+s)^p f(s) ds,
//! ```
//!
//! and sub/super-solutions stay below/above explicit power-law envelopes.

pub mod suite;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::integrator::dopri::{self, OdeSystem, Tolerances};
use crate::model::ScalarFn;
use crate::quadrature;

pub use suite::{
    generate_instances, run_lemma_suites, FailedInstance, LemmaInstance, LemmaOutcome, LemmaSuiteReport, SuiteSummary,
    LEMMA1_TOL, LEMMA2_TOL,
};

/// Perturbation `f(t)` in the comparison equation.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    Zero,
    Constant {
        value: f64,
    },
    /// `scale (1+t)^{-power}`.
    DampedPower {
        scale: f64,
        power: f64,
    },
    /// `amplitude sin(omega t) (1+t)^{-decay}`.
    Oscillating {
        amplitude: f64,
        omega: f64,
        decay: f64,
    },
    /// Arbitrary callable; cannot be serialized.
    #[serde(skip)]
    Custom(ScalarFn),
}

impl fmt::Debug for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Constant { value } => write!(f, "Constant({value})"),
            Self::DampedPower { scale, power } => write!(f, "DampedPower({scale}, {power})"),
            Self::Oscillating {
                amplitude,
                omega,
                decay,
            } => {
                write!(f, "Oscillating({amplitude}, {omega}, {decay})")
            }
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Perturbation {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom(Arc::new(f))
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant { value } => *value,
            Self::DampedPower { scale, power } => scale * (1.0 + t).powf(-power),
            Self::Oscillating {
                amplitude,
                omega,
                decay,
            } => amplitude * (omega * t).sin() * (1.0 + t).powf(-decay),
            Self::Custom(f) => f(t),
        }
    }

    /// `∫_a^b (1+s)^p f(s) ds`, in closed form where one exists.
    pub fn weighted_integral(&self, p: f64, a: f64, b: f64) -> Result<f64> {
        let power_integral = |c: f64, e: f64| {
            // ∫_a^b c (1+s)^e ds
            if (e + 1.0).abs() < 1e-14 {
                c * ((1.0 + b).ln() - (1.0 + a).ln())
            } else {
                c * ((1.0 + b).powf(e + 1.0) - (1.0 + a).powf(e + 1.0)) / (e + 1.0)
            }
        };
        Ok(match self {
            Self::Zero => 0.0,
            Self::Constant { value } => power_integral(*value, p),
            Self::DampedPower { scale, power } => power_integral(*scale, p - power),
            _ => quadrature::integrate(|s| (1.0 + s).powf(p) * self.eval(s), a, b, 1e-12)?.value,
        })
    }
}

/// Data of the second comparison lemma, plus the constants of the first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonProblem {
    pub w0: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub p: f64,
    pub f: Perturbation,
    pub c1: f64,
    pub c2: f64,
    pub horizon: f64,
}

impl ComparisonProblem {
    pub fn new(w0: f64, alpha: f64, gamma: f64, p: f64, f: Perturbation, horizon: f64) -> Result<Self> {
        let problem = Self {
            w0,
            alpha,
            gamma,
            p,
            f,
            c1: 1.0,
            c2: 0.0,
            horizon,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w0 > 0.0 && self.alpha > 0.0 && self.gamma > 0.0 && self.p >= 0.0) {
            return Err(usage("comparison problem needs w0, alpha, gamma > 0 and p >= 0"));
        }
        if !(self.c1 > 0.0 && self.c2 >= 0.0) {
            return Err(usage("comparison problem needs c1 > 0 and c2 >= 0"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(usage("horizon must be positive"));
        }
        Ok(())
    }

    /// `min{1/(4γ w0^γ), α/(2(p+1))}`, the smallness constant for `f`.
    pub fn smallness(&self) -> f64 {
        f64::min(
            1.0 / (4.0 * self.gamma * self.w0.powf(self.gamma)),
            self.alpha / (2.0 * (self.p + 1.0)),
        )
    }

    fn alpha_part(&self, t: f64) -> f64 {
        self.alpha * ((1.0 + t).powf(self.p + 1.0) - 1.0) / (self.p + 1.0)
    }

    fn z_from_phi(&self, phi: f64) -> Result<f64> {
        let base = 1.0 + 2.0 * self.gamma * self.w0.powf(self.gamma) * phi;
        if !(base > 0.0) {
            return Err(Error::Domain(format!(
                "1 + 2γ w0^γ Φ = {base} is not positive; the reference solution blows up"
            )));
        }
        Ok(self.w0 * base.powf(-1.0 / self.gamma))
    }
}

/// `f(0) + (c₂/c₁)² (1+t)^{2p}`.
pub fn lemma1_bound(f0: f64, c1: f64, c2: f64, p: f64, t: f64) -> f64 {
    let r = c2 / c1;
    f0 + r * r * (1.0 + t).powf(2.0 * p)
}

/// `Φ(t)`, with the integral by adaptive quadrature.
pub fn phi(problem: &ComparisonProblem, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(usage("phi needs t >= 0"));
    }
    Ok(problem.alpha_part(t) + problem.f.weighted_integral(problem.p, 0.0, t)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FCondition {
    pub satisfied: bool,
    /// Largest ratio `|∫₀ᵗ (1+s)^p f| / (C (1+t)^{p+1})` on the grid.
    pub margin: f64,
    pub worst_t: f64,
}

/// Grid used by [`check_f_condition`]: uniform, fine enough to resolve oscillations.
fn condition_grid(problem: &ComparisonProblem) -> Vec<f64> {
    let per_unit = match problem.f {
        Perturbation::Oscillating { omega, .. } => (omega.abs() * 4.0).max(1.0),
        _ => 1.0,
    };
    let n = ((problem.horizon * per_unit).ceil() as usize).clamp(400, 20_000);
    (0..=n).map(|i| problem.horizon * i as f64 / n as f64).collect()
}

/// Checks the smallness condition on `∫₀ᵗ (1+s)^p f` over a dense grid on `[0, T]`.
pub fn check_f_condition(problem: &ComparisonProblem) -> Result<FCondition> {
    problem.validate()?;
    let c = problem.smallness();
    let grid = condition_grid(problem);
    let mut acc = 0.0;
    let mut margin: f64 = 0.0;
    let mut worst_t = 0.0;
    for w in grid.windows(2) {
        acc += problem.f.weighted_integral(problem.p, w[0], w[1])?;
        let ratio = acc.abs() / (c * (1.0 + w[1]).powf(problem.p + 1.0));
        if ratio > margin {
            margin = ratio;
            worst_t = w[1];
        }
    }
    Ok(FCondition {
        satisfied: margin <= 1.0,
        margin,
        worst_t,
    })
}

/// `w0 max{2, (p+1)/(αγ w0^γ)}^{1/γ} (1+t)^{-(p+1)/γ}`, the envelope for subsolutions.
pub fn lemma2_upper(problem: &ComparisonProblem, t: f64) -> f64 {
    let ComparisonProblem {
        w0, alpha, gamma, p, ..
    } = *problem;
    let factor = f64::max(2.0, (p + 1.0) / (alpha * gamma * w0.powf(gamma)));
    w0 * factor.powf(1.0 / gamma) * (1.0 + t).powf(-(p + 1.0) / gamma)
}

/// `w0 (1 + 3αγ w0^γ/(p+1))^{-1/γ} (1+t)^{-(p+1)/γ}`, the envelope for supersolutions.
pub fn lemma2_lower(problem: &ComparisonProblem, t: f64) -> f64 {
    let ComparisonProblem {
        w0, alpha, gamma, p, ..
    } = *problem;
    w0 * (1.0 + 3.0 * alpha * gamma * w0.powf(gamma) / (p + 1.0)).powf(-1.0 / gamma)
        * (1.0 + t).powf(-(p + 1.0) / gamma)
}

/// Numerical and closed-form `z` on a uniform grid over `[0, T]`.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonSolution {
    pub times: Vec<f64>,
    pub numeric: Vec<f64>,
    pub closed_form: Vec<f64>,
    pub max_rel_err: f64,
}

/// Output points of [`integrate_comparison_ode`].
pub const COMPARISON_SAMPLES: usize = 201;

pub(crate) struct ScalarOde<F: Fn(f64, f64) -> f64>(pub F);

impl<F: Fn(f64, f64) -> f64> OdeSystem for ScalarOde<F> {
    fn dim(&self) -> usize {
        1
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        dy[0] = (self.0)(t, y[0]);
        Ok(())
    }
}

/// Integrates `y' = rhs(t, y)` and returns `y` at `times`.
pub(crate) fn integrate_scalar(rhs: impl Fn(f64, f64) -> f64, y0: f64, times: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(times.len());
    let tol = Tolerances {
        rel: 1e-12,
        abs: 1e-300,
    };
    let (finish, _) = dopri::solve(
        &ScalarOde(rhs),
        times[0],
        &[y0],
        times,
        tol,
        10_000_000,
        |_, _, _| None::<()>,
        |_, y, _| out.push(y[0]),
    )?;
    match finish {
        dopri::Finish::ReachedEnd => Ok(out),
        _ => Err(Error::Numeric(
            "scalar comparison integration did not reach the horizon".into(),
        )),
    }
}

pub(crate) fn uniform_times(horizon: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| horizon * i as f64 / (n - 1) as f64).collect()
}

/// Solves `z' = -2(1+t)^p z^{γ+1}(α + f)`, `z(0) = w0`, numerically and compares
/// with the closed form at every output.
pub fn integrate_comparison_ode(problem: &ComparisonProblem) -> Result<ComparisonSolution> {
    problem.validate()?;
    let times = uniform_times(problem.horizon, COMPARISON_SAMPLES);
    let mut closed_form = Vec::with_capacity(times.len());
    let mut integral = 0.0;
    closed_form.push(problem.w0);
    for w in times.windows(2) {
        integral += problem.f.weighted_integral(problem.p, w[0], w[1])?;
        closed_form.push(problem.z_from_phi(problem.alpha_part(w[1]) + integral)?);
    }
    let (alpha, gamma, p) = (problem.alpha, problem.gamma, problem.p);
    let numeric = integrate_scalar(
        |t, z| -2.0 * (1.0 + t).powf(p) * z.max(0.0).powf(gamma + 1.0) * (alpha + problem.f.eval(t)),
        problem.w0,
        &times,
    )?;
    let max_rel_err = numeric
        .iter()
        .zip(&closed_form)
        .map(|(a, b)| ((a - b) / b).abs())
        .fold(0.0, f64::max);
    Ok(ComparisonSolution {
        times,
        numeric,
        closed_form,
        max_rel_err,
    })
}
