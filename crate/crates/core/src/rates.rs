//! Power-law fits of decaying quantities and the exponents they are compared against.

use serde::{Deserialize, Serialize};

use crate::energies::{energy_snapshot, TheoremMode};
use crate::error::{usage, Error, Result};
use crate::integrator::Trajectory;
use crate::model::{Damping, ModelParams};
use crate::spectral::SpectralOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Least squares on every sample in the window.
    PointFit,
    /// Least squares on the maxima of log-spaced bins, for oscillating data.
    EnvelopeFit,
}

/// Bins per decade of `1+t` used by [`FitMode::EnvelopeFit`].
pub const ENVELOPE_BINS_PER_DECADE: f64 = 10.0;

/// `q(t) ≈ amplitude (1+t)^{-exponent}` on `window`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub amplitude: f64,
    pub window: (f64, f64),
    /// RMS of the log residuals of the fitted points.
    pub residual: f64,
    pub mode: FitMode,
    pub points: usize,
    /// Range of `q(t)(1+t)^exponent` over the fitted points.
    pub amplitude_bracket: (f64, f64),
}

/// The last two decades of a run, `[t_end/100, t_end]`.
pub fn default_window(t_end: f64) -> (f64, f64) {
    (t_end / 100.0, t_end)
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    (slope, intercept, (rss / n).sqrt())
}

/// Fits `log q` against `log(1+t)` on the samples with `t` in `window`.
pub fn fit_power_law(samples: &[(f64, f64)], window: (f64, f64), mode: FitMode) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(lo < hi && lo >= 0.0) {
        return Err(usage(format!("invalid fit window [{lo}, {hi}]")));
    }
    let inside: Vec<(f64, f64)> = samples.iter().copied().filter(|(t, _)| *t >= lo && *t <= hi).collect();
    if inside.len() < 8 {
        return Err(Error::Data(format!(
            "need at least 8 samples in [{lo}, {hi}], found {}",
            inside.len()
        )));
    }
    if let Some((t, q)) = inside.iter().find(|(_, q)| !(*q > 0.0 && q.is_finite())) {
        return Err(Error::Data(format!(
            "quantity is {q} at t = {t}; log fit needs positive values"
        )));
    }
    let logs: Vec<(f64, f64)> = inside.iter().map(|(t, q)| ((1.0 + t).ln(), q.ln())).collect();
    let pts = match mode {
        FitMode::PointFit => logs,
        FitMode::EnvelopeFit => {
            let x0 = (1.0 + lo).ln();
            let width = std::f64::consts::LN_10 / ENVELOPE_BINS_PER_DECADE;
            let mut bins: Vec<(i64, (f64, f64))> = Vec::new();
            for (x, y) in logs {
                let idx = ((x - x0) / width).floor() as i64;
                match bins.last_mut() {
                    Some((i, best)) if *i == idx => {
                        if y > best.1 {
                            *best = (x, y);
                        }
                    }
                    _ => bins.push((idx, (x, y))),
                }
            }
            let env: Vec<(f64, f64)> = bins.into_iter().map(|(_, p)| p).collect();
            if env.len() < 3 {
                return Err(Error::Data(format!(
                    "envelope fit found only {} occupied bins in [{lo}, {hi}]",
                    env.len()
                )));
            }
            env
        }
    };
    let (slope, intercept, residual) = least_squares(&pts);
    let exponent = -slope;
    let (mut bmin, mut bmax) = (f64::INFINITY, 0.0f64);
    for (x, y) in &pts {
        let c = (y + exponent * x).exp();
        bmin = bmin.min(c);
        bmax = bmax.max(c);
    }
    Ok(DecayFit {
        exponent,
        amplitude: intercept.exp(),
        window,
        residual,
        mode,
        points: pts.len(),
        amplitude_bracket: (bmin, bmax),
    })
}

/// Fits on trailing windows `[t_end/10^d, t_end]`, `d` shrinking from
/// `max_decades` to half a decade in quarter steps, and returns the widest one
/// whose residual is at most `max_residual`.
pub fn widest_window(samples: &[(f64, f64)], max_decades: f64, mode: FitMode, max_residual: f64) -> Result<DecayFit> {
    let t_end = samples.iter().map(|s| s.0).fold(f64::NAN, f64::max);
    if !(t_end > 0.0) {
        return Err(Error::Data("no positive sample times".into()));
    }
    let mut d = max_decades;
    let mut last_err = None;
    while d >= 0.5 - 1e-12 {
        match fit_power_law(samples, (t_end / 10f64.powf(d), t_end), mode) {
            Ok(fit) if fit.residual <= max_residual => return Ok(fit),
            Ok(fit) => last_err = Some(Error::Data(format!("residual {} on {:?}", fit.residual, fit.window))),
            Err(e) => last_err = Some(e),
        }
        d -= 0.25;
    }
    Err(last_err.unwrap_or_else(|| usage("max_decades must be at least 0.5")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// `|A^{1/2}u|²`
    A12u2,
    /// `|Au|²`
    Au2,
    /// `|u'|²`
    V2,
}

impl Quantity {
    pub const ALL: [Quantity; 3] = [Quantity::A12u2, Quantity::Au2, Quantity::V2];

    pub fn name(&self) -> &'static str {
        match self {
            Quantity::A12u2 => "a12u2",
            Quantity::Au2 => "au2",
            Quantity::V2 => "v2",
        }
    }

    /// The trajectory CSV column holding this quantity.
    pub fn column(&self) -> &'static str {
        match self {
            Quantity::A12u2 => "norm_a12u2",
            Quantity::Au2 => "norm_au2",
            Quantity::V2 => "norm_v2",
        }
    }

    /// Fit mode used by default: envelopes for the oscillating velocity.
    pub fn default_mode(&self) -> FitMode {
        match self {
            Quantity::V2 => FitMode::EnvelopeFit,
            _ => FitMode::PointFit,
        }
    }
}

impl std::str::FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a12u2" | "norm_a12u2" => Ok(Quantity::A12u2),
            "au2" | "norm_au2" => Ok(Quantity::Au2),
            "v2" | "norm_v2" => Ok(Quantity::V2),
            other => Err(usage(format!("unknown quantity `{other}` (expected a12u2, au2 or v2)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `C₁(1+t)^{-upper_exp} ≤ q ≤ C₂(1+t)^{-lower_exp}`.
    TwoSided,
    /// Only `q ≤ C₂(1+t)^{-lower_exp}`; `upper_exp` repeats `lower_exp`.
    UpperOnly,
}

/// Range of decay exponents allowed for one quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    pub quantity: Quantity,
    pub lower_exp: f64,
    pub upper_exp: f64,
    pub kind: BoundKind,
}

impl RatePrediction {
    /// Whether a fitted exponent is compatible, with `tol` slack on each side.
    pub fn admits(&self, exponent: f64, tol: f64) -> bool {
        match self.kind {
            BoundKind::TwoSided => exponent >= self.lower_exp - tol && exponent <= self.upper_exp + tol,
            BoundKind::UpperOnly => exponent >= self.lower_exp - tol,
        }
    }
}

/// Largest `p` covered by the noncoercive rates, `(γ²+1)/(γ²+2γ-1)`.
pub fn noncoercive_p_max(gamma: f64) -> f64 {
    (gamma * gamma + 1.0) / (gamma * gamma + 2.0 * gamma - 1.0)
}

pub fn theoretical_exponents(params: &ModelParams, mode: TheoremMode) -> Result<Vec<RatePrediction>> {
    let (p, g) = (params.p, params.gamma);
    let base = (p + 1.0) / g;
    let pred = |quantity, lower_exp, upper_exp, kind| RatePrediction {
        quantity,
        lower_exp,
        upper_exp,
        kind,
    };
    match mode {
        TheoremMode::Coercive => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Applicability(format!(
                    "coercive rates need p in [0, 1], got p = {p}"
                )));
            }
            Ok(vec![
                pred(Quantity::A12u2, base, base, BoundKind::TwoSided),
                pred(Quantity::Au2, base, base, BoundKind::TwoSided),
                pred(Quantity::V2, 2.0 + base, 2.0 + base, BoundKind::UpperOnly),
            ])
        }
        TheoremMode::Noncoercive => {
            if g < 1.0 {
                return Err(Error::Applicability(format!(
                    "noncoercive rates need γ >= 1, got γ = {g}"
                )));
            }
            let p_max = noncoercive_p_max(g);
            if !(p >= 0.0 && p <= p_max * (1.0 + 1e-12)) {
                return Err(Error::Applicability(format!(
                    "noncoercive rates need 0 <= p <= (γ²+1)/(γ²+2γ-1) = {p_max}, got p = {p}"
                )));
            }
            let v2 = (2.0 * g * g + (1.0 - p) * g + p + 1.0) / (g * g + g);
            Ok(vec![
                pred(Quantity::A12u2, (p + 1.0) / (g + 1.0), base, BoundKind::TwoSided),
                pred(Quantity::Au2, base, base, BoundKind::UpperOnly),
                pred(Quantity::V2, v2, v2, BoundKind::UpperOnly),
            ])
        }
    }
}

/// Outcome of [`nondecay_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonDecay {
    /// `min (|u'|² + |A^{1/2}u|²)` over the tail.
    pub floor: f64,
    /// `safety · H(0) exp(-(2/ε) ∫₀^∞ b)`.
    pub threshold: f64,
    pub h0: f64,
    pub damping_integral: f64,
    pub passed: bool,
}

/// Safety factor on the exponential lower bound.
pub const NONDECAY_SAFETY: f64 = 0.5;

/// `∫₀^∞ b`, or an applicability error if `b` does not look integrable.
pub fn total_damping(params: &ModelParams) -> Result<f64> {
    match params.damping {
        Damping::Power => {
            if params.p > 1.0 {
                Ok(1.0 / (params.p - 1.0))
            } else {
                Err(Error::Applicability(format!(
                    "b(t) = (1+t)^-p is not integrable for p = {} <= 1",
                    params.p
                )))
            }
        }
        Damping::General { .. } => {
            let near = params.b_integral(1e6);
            let far = params.b_integral(1e8);
            if !(far.is_finite() && far - near <= 1e-3 * far) {
                return Err(Error::Applicability(format!(
                    "∫b keeps growing ({near} on [0, 1e6], {far} on [0, 1e8]); b does not look integrable"
                )));
            }
            Ok(far)
        }
    }
}

/// Checks that `|u'|² + |A^{1/2}u|²` stays above the exponential floor over the
/// last `tail_fraction` of the samples.
pub fn nondecay_check(
    params: &ModelParams,
    op: &SpectralOperator,
    traj: &Trajectory,
    tail_fraction: f64,
) -> Result<NonDecay> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(usage("tail_fraction must be in (0, 1]"));
    }
    let damping_integral = total_damping(params)?;
    let first = traj.samples.first().ok_or_else(|| usage("empty trajectory"))?;
    let h0 = energy_snapshot(params, op, first)?.h;
    if !(h0 > 0.0) {
        return Err(Error::Applicability(
            "initial energy |u1|² + ∫ m vanishes, so no positive floor is predicted".into(),
        ));
    }
    let n = traj.samples.len();
    let start = n - ((n as f64 * tail_fraction).ceil() as usize).clamp(1, n);
    let floor = traj.samples[start..]
        .iter()
        .map(|s| s.v.norm_sq() + op.weighted_sq(&s.u, 1.0))
        .fold(f64::INFINITY, f64::min);
    let threshold = NONDECAY_SAFETY * h0 * (-2.0 / params.epsilon * damping_integral).exp();
    Ok(NonDecay {
        floor,
        threshold,
        h0,
        damping_integral,
        passed: floor >= threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{integrate_hyperbolic, IntegrationSpec};
    use crate::model::PhaseState;
    use crate::spectral::StateVector;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn series(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
        let (a, b) = ((1.0 + lo).ln(), (1.0 + hi).ln());
        (0..n)
            .map(|i| {
                let t = (a + (b - a) * i as f64 / (n - 1) as f64).exp() - 1.0;
                (t, f(t))
            })
            .collect()
    }

    #[test]
    fn exact_power_law() {
        let s = series(|t| 5.0 * (1.0 + t).powf(-1.5), 10.0, 1000.0, 50);
        let fit = fit_power_law(&s, (10.0, 1000.0), FitMode::PointFit).unwrap();
        assert_relative_eq!(fit.exponent, 1.5, max_relative = 1e-12);
        assert_relative_eq!(fit.amplitude, 5.0, max_relative = 1e-12);
        assert!(fit.residual <= 1e-12);
        let c = fit_power_law(&series(|_| 3.0, 1.0, 100.0, 20), (1.0, 100.0), FitMode::PointFit).unwrap();
        assert!(c.exponent.abs() < 1e-12);
    }

    #[test]
    fn oscillating_envelope() {
        let s = series(|t| (1.0 + t).powf(-2.0) * (2.0 + t.sin()), 100.0, 1e4, 4000);
        let fit = fit_power_law(&s, (100.0, 1e4), FitMode::EnvelopeFit).unwrap();
        assert!((fit.exponent - 2.0).abs() <= 0.05, "{}", fit.exponent);
    }

    #[test]
    fn widest_window_skips_the_transient() {
        // exponent 0.8 early, 1.5 late
        let s = series(|t| (1.0 + t).powf(-0.8) / (1.0 + t / 1e3).powf(0.7), 0.0, 1e5, 2000);
        let fit = widest_window(&s, 3.0, FitMode::PointFit, 0.01).unwrap();
        assert!(fit.residual <= 0.01);
        assert!(
            fit.window.0 > 1e2 && (fit.window.1 / 1e5 - 1.0).abs() < 1e-12,
            "{:?}",
            fit.window
        );
        assert!(fit.exponent > 1.2 && fit.exponent < 1.5);
        assert!(widest_window(&s, 3.0, FitMode::PointFit, 1e-9).is_err());
    }

    #[test]
    fn fit_errors() {
        let s = series(|t| 1.0 / (1.0 + t), 0.0, 10.0, 20);
        assert!(matches!(
            fit_power_law(&s[..5], (0.0, 10.0), FitMode::PointFit),
            Err(Error::Data(_))
        ));
        let mut bad = s.clone();
        bad[10].1 = 0.0;
        assert!(matches!(
            fit_power_law(&bad, (0.0, 10.0), FitMode::PointFit),
            Err(Error::Data(_))
        ));
        assert!(fit_power_law(&s, (5.0, 1.0), FitMode::PointFit).is_err());
    }

    #[test]
    fn predicted_exponents() {
        let params = ModelParams::prototype(1e-3, 0.5, 1.0).unwrap();
        let c = theoretical_exponents(&params, TheoremMode::Coercive).unwrap();
        assert_eq!((c[0].lower_exp, c[1].lower_exp, c[2].lower_exp), (1.5, 1.5, 3.5));
        let nc = theoretical_exponents(&params, TheoremMode::Noncoercive).unwrap();
        assert_eq!((nc[0].lower_exp, nc[0].upper_exp), (0.75, 1.5));
        assert_eq!(nc[2].lower_exp, 2.0);
        assert_eq!(noncoercive_p_max(1.0), 1.0);
        let edge = ModelParams::prototype(1e-3, 1.0, 1.0).unwrap();
        assert!(theoretical_exponents(&edge, TheoremMode::Noncoercive).is_ok());
        let out = ModelParams::prototype(1e-3, 1.2, 1.0).unwrap();
        assert!(matches!(
            theoretical_exponents(&out, TheoremMode::Coercive),
            Err(Error::Applicability(_))
        ));
        assert!(matches!(
            theoretical_exponents(&out, TheoremMode::Noncoercive),
            Err(Error::Applicability(_))
        ));
        let frac = ModelParams::prototype(1e-3, 0.2, 0.5).unwrap();
        assert!(matches!(
            theoretical_exponents(&frac, TheoremMode::Noncoercive),
            Err(Error::Applicability(_))
        ));
    }

    #[test]
    fn nondecay_floor_values() {
        let params = ModelParams::prototype(1.0, 2.0, 1.0).unwrap();
        let op = SpectralOperator::new(vec![1.0]).unwrap();
        let init = PhaseState::at_rest(StateVector::new(vec![1.0]));
        let traj = integrate_hyperbolic(&params, &op, &init, &IntegrationSpec::new(100.0)).unwrap();
        let nd = nondecay_check(&params, &op, &traj, 0.2).unwrap();
        assert_eq!(nd.h0, 0.5);
        assert_eq!(nd.damping_integral, 1.0);
        assert_relative_eq!(nd.threshold, 0.5 * 0.5 * (-2f64).exp(), max_relative = 1e-15);
        assert!(nd.passed);

        let zero = PhaseState::at_rest(StateVector::new(vec![0.0]));
        let flat = integrate_hyperbolic(&params, &op, &zero, &IntegrationSpec::new(1.0).allow_degenerate()).unwrap();
        assert!(matches!(
            nondecay_check(&params, &op, &flat, 0.2),
            Err(Error::Applicability(_))
        ));

        let weak = ModelParams::prototype(1.0, 0.5, 1.0).unwrap();
        assert!(matches!(
            nondecay_check(&weak, &op, &traj, 0.2),
            Err(Error::Applicability(_))
        ));
    }

    #[test]
    fn general_damping_integrability() {
        let integrable = ModelParams::prototype(1.0, 0.0, 1.0)
            .unwrap()
            .with_damping(|t| (1.0 + t).powi(-2), "(1+t)^-2");
        assert_relative_eq!(total_damping(&integrable).unwrap(), 1.0, max_relative = 1e-6);
        let not = ModelParams::prototype(1.0, 0.0, 1.0)
            .unwrap()
            .with_damping(|t| 1.0 / (1.0 + t), "1/(1+t)");
        assert!(total_damping(&not).is_err());
    }

    proptest! {
        #[test]
        fn exponent_invariant_under_scaling(c in 1e-6f64..1e6, a in 0.0f64..4.0, lo in 1.0f64..100.0) {
            let s = series(|t| (1.0 + t).powf(-a) * (1.5 + (3.0 * t).sin()), lo, lo * 300.0, 200);
            let scaled: Vec<(f64, f64)> = s.iter().map(|(t, q)| (*t, c * q)).collect();
            for mode in [FitMode::PointFit, FitMode::EnvelopeFit] {
                let f1 = fit_power_law(&s, (lo, lo * 300.0), mode).unwrap();
                let f2 = fit_power_law(&scaled, (lo, lo * 300.0), mode).unwrap();
                prop_assert!((f1.exponent - f2.exponent).abs() <= 1e-9 * (1.0 + f1.exponent.abs()));
                prop_assert!((f2.amplitude / f1.amplitude / c - 1.0).abs() <= 1e-9);
            }
        }

        #[test]
        fn coercive_and_noncoercive_share_the_fast_exponent(p in 0.0f64..1.0, gamma in 1.0f64..4.0) {
            let params = ModelParams::prototype(1e-3, p, gamma).unwrap();
            prop_assume!(p <= noncoercive_p_max(gamma));
            let c = theoretical_exponents(&params, TheoremMode::Coercive).unwrap();
            let nc = theoretical_exponents(&params, TheoremMode::Noncoercive).unwrap();
            prop_assert_eq!(c[0].upper_exp, nc[0].upper_exp);
            prop_assert_eq!(c[0].upper_exp, (p + 1.0) / gamma);
            prop_assert!(nc.iter().chain(&c).all(|r| r.lower_exp <= r.upper_exp));
        }
    }
}
