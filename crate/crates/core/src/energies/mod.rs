//! Energy functionals along a trajectory, the constants of the a-priori
//! estimates, and audits of those estimates.
//!
//! Write `w = |A^{1/2}u|²`. The snapshot functionals are
//!
//! ```text
//! F = ε|A^{1/2}u'|²/w^γ + |Au|²
//! P = ε(w|A^{1/2}u'|² - <Au,u'>²)/w^{γ+2} + |Au|²/w
//! Q = |u'|²/w^{2γ+1}
//! R = ε|A^{1/2}u'|²/w^{γ+1} + |Au|²/w
//! H = ε|u'|² + ∫₀^w m
//! D = ε(1+t)^p <u',u> + ½(1 - εp(1+t)^{p-1})|u|²
//! D̂ = ε(1+t)^{2β-1} <u',Au>/w^γ,    β = (p+1)/γ
//! G = (1+t)^β |u'|²/w^{2γ}
//! ```

mod audit;
mod constants;

pub use audit::{check_apriori, AuditReport, AuditVerdict, HypothesisCheck, InequalityCheck, AUDIT_TOL};
pub use constants::{compute_constants, TheoremConstants, TheoremMode, K_MARGIN};

use serde::Serialize;

use crate::error::{usage, Result};
use crate::integrator::{Flow, Trajectory};
use crate::model::{ModelParams, PhaseState};
use crate::spectral::{weighted_sq, SpectralOperator};

/// Below this `|A^{1/2}u|²` the quotient functionals are left undefined.
pub const DEGENERACY_FLOOR: f64 = 1e-240;

/// All norms and energy functionals at one time.
///
/// `f`, `p`, `q`, `r`, `dhat`, `g` and `k_ratio` are `None` when the state is degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergySnapshot {
    pub t: f64,
    pub norm_u2: f64,
    pub norm_a12u2: f64,
    pub norm_au2: f64,
    pub norm_v2: f64,
    pub norm_a12v2: f64,
    pub inner_au_v: f64,
    #[serde(rename = "F")]
    pub f: Option<f64>,
    #[serde(rename = "P")]
    pub p: Option<f64>,
    #[serde(rename = "Q")]
    pub q: Option<f64>,
    #[serde(rename = "R")]
    pub r: Option<f64>,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "Dhat")]
    pub dhat: Option<f64>,
    #[serde(rename = "G")]
    pub g: Option<f64>,
    pub k_ratio: Option<f64>,
    pub degenerate: bool,
}

/// `w|A^{1/2}v|² - <Au,v>²` via Lagrange's identity, so the result is a sum of
/// nonnegative terms and vanishes identically in one dimension.
pub(crate) fn transverse_defect(lambda: &[f64], u: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for j in 0..lambda.len() {
        for k in j + 1..lambda.len() {
            let c = u[j] * v[k] - u[k] * v[j];
            acc += lambda[j] * lambda[k] * c * c;
        }
    }
    acc
}

/// Snapshot with the default degeneracy floor.
pub fn energy_snapshot(params: &ModelParams, op: &SpectralOperator, s: &PhaseState) -> Result<EnergySnapshot> {
    energy_snapshot_with_floor(params, op, s, DEGENERACY_FLOOR)
}

pub fn energy_snapshot_with_floor(
    params: &ModelParams,
    op: &SpectralOperator,
    s: &PhaseState,
    floor: f64,
) -> Result<EnergySnapshot> {
    if s.u.len() != op.dim() || s.v.len() != op.dim() {
        return Err(usage(format!(
            "state has {}/{} coefficients but the spectrum has {}",
            s.u.len(),
            s.v.len(),
            op.dim()
        )));
    }
    let lambda = op.eigenvalues();
    let (u, v) = (s.u.coeffs(), s.v.coeffs());
    let eps = params.epsilon;
    let gamma = params.gamma;
    let pp = params.p;
    let one_t = 1.0 + s.t;
    let beta = (pp + 1.0) / gamma;

    let norm_u2 = s.u.norm_sq();
    let w = weighted_sq(lambda, u, 1.0);
    let norm_au2 = weighted_sq(lambda, u, 2.0);
    let norm_v2 = s.v.norm_sq();
    let norm_a12v2 = weighted_sq(lambda, v, 1.0);
    let inner = op.inner_au_v_unchecked(u, v);

    let h = eps * norm_v2 + params.m_primitive(w);
    let d = eps * one_t.powf(pp) * s.u.dot(&s.v) + 0.5 * (1.0 - eps * pp * one_t.powf(pp - 1.0)) * norm_u2;

    let degenerate = !(w >= floor);
    let mut snap = EnergySnapshot {
        t: s.t,
        norm_u2,
        norm_a12u2: w,
        norm_au2,
        norm_v2,
        norm_a12v2,
        inner_au_v: inner,
        f: None,
        p: None,
        q: None,
        r: None,
        h,
        d,
        dhat: None,
        g: None,
        k_ratio: None,
        degenerate,
    };
    if !degenerate {
        let wg = w.powf(gamma);
        let ratio = norm_au2 / w;
        snap.f = Some(eps * norm_a12v2 / wg + norm_au2);
        snap.p = Some(eps * transverse_defect(lambda, u, v) / (wg * w * w) + ratio);
        snap.q = Some(norm_v2 / (wg * wg * w));
        snap.r = Some(eps * norm_a12v2 / (wg * w) + ratio);
        snap.dhat = Some(eps * one_t.powf(2.0 * beta - 1.0) * inner / wg);
        snap.g = Some(one_t.powf(beta) * norm_v2 / (wg * wg));
        snap.k_ratio = Some(inner.abs() / w);
    }
    Ok(snap)
}

/// How well a hyperbolic run conserves `H(t) + 2∫₀ᵗ b|u'|² = H(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBalance {
    pub h0: f64,
    /// `max |H(t) + 2∫b|u'|² - H(0)| / max(H(0), 1e-300)` over the samples.
    pub max_residual: f64,
    /// `min (H(t) - H(0) exp(-(2/ε)∫₀ᵗ b))`; nonnegative when the floor holds.
    pub min_floor_margin: f64,
}

pub fn energy_balance(params: &ModelParams, op: &SpectralOperator, traj: &Trajectory) -> Result<EnergyBalance> {
    if traj.flow != Flow::Hyperbolic {
        return Err(usage("energy balance needs a hyperbolic trajectory"));
    }
    let first = traj.samples.first().ok_or_else(|| usage("empty trajectory"))?;
    let h0 = energy_snapshot(params, op, first)?.h;
    let scale = h0.max(1e-300);
    let mut max_residual: f64 = 0.0;
    let mut min_floor_margin = f64::INFINITY;
    for (s, acc) in traj.samples.iter().zip(&traj.integrals) {
        let w = op.weighted_sq(&s.u, 1.0);
        let h = params.epsilon * s.v.norm_sq() + params.m_primitive(w);
        max_residual = max_residual.max((h + 2.0 * acc.dissipation - h0).abs() / scale);
        min_floor_margin = min_floor_margin.min(h - h0 * (-2.0 / params.epsilon * acc.damping).exp());
    }
    Ok(EnergyBalance {
        h0,
        max_residual,
        min_floor_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::StateVector;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn state(u: &[f64], v: &[f64]) -> PhaseState {
        PhaseState::new(0.0, StateVector::new(u.to_vec()), StateVector::new(v.to_vec())).unwrap()
    }

    #[test]
    fn energy_balance_holds_along_runs() {
        use crate::integrator::{integrate_hyperbolic, integrate_parabolic, IntegrationSpec};
        let op = SpectralOperator::power(2.0, 4).unwrap();
        for (eps, p) in [(0.05, 0.5), (0.5, 2.0)] {
            let params = ModelParams::prototype(eps, p, 1.0).unwrap();
            let init = state(&[1.0, 0.3, 0.0, -0.2], &[0.5, 0.0, 0.1, 0.0]);
            let traj = integrate_hyperbolic(&params, &op, &init, &IntegrationSpec::new(200.0)).unwrap();
            let bal = energy_balance(&params, &op, &traj).unwrap();
            assert!(bal.max_residual <= 1e-7, "{bal:?}");
            assert!(bal.min_floor_margin >= -1e-9, "{bal:?}");
        }
        let params = ModelParams::prototype(0.1, 0.5, 1.0).unwrap();
        let par = integrate_parabolic(&params, &op, &StateVector::basis(4, 0), &IntegrationSpec::new(1.0)).unwrap();
        assert!(energy_balance(&params, &op, &par).is_err());
    }

    #[test]
    fn scalar_hand_values() {
        let op = SpectralOperator::new(vec![1.0]).unwrap();
        let params = ModelParams::prototype(0.1, 0.0, 1.0).unwrap();
        let e = energy_snapshot(&params, &op, &state(&[2.0], &[0.0])).unwrap();
        assert_eq!(e.norm_a12u2, 4.0);
        assert_eq!(e.f, Some(4.0));
        assert_eq!(e.p, Some(1.0));
        assert_eq!(e.q, Some(0.0));
        assert_eq!(e.r, Some(1.0));
        assert_eq!(e.h, 8.0);
        assert_eq!(e.k_ratio, Some(0.0));
        assert!(!e.degenerate);
    }

    #[test]
    fn zero_state_is_degenerate() {
        let op = SpectralOperator::new(vec![1.0, 4.0]).unwrap();
        let params = ModelParams::prototype(0.5, 0.5, 1.0).unwrap();
        let e = energy_snapshot(&params, &op, &state(&[0.0, 0.0], &[0.0, 0.0])).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.h, 0.0);
        assert_eq!(e.d, 0.0);
        assert!(e.f.is_none() && e.p.is_none() && e.k_ratio.is_none() && e.g.is_none());
    }

    #[test]
    fn two_mode_p() {
        let op = SpectralOperator::new(vec![1.0, 4.0]).unwrap();
        let params = ModelParams::prototype(1.0, 0.0, 1.0).unwrap();
        let e = energy_snapshot(&params, &op, &state(&[1.0, 1.0], &[1.0, -1.0])).unwrap();
        // w = 5, |A^{1/2}v|² = 5, <Au,v> = -3, denominator w^{γ+2} = 125
        assert_relative_eq!(e.p.unwrap(), 16.0 / 125.0 + 17.0 / 5.0, max_relative = 1e-15);
        assert_relative_eq!(e.k_ratio.unwrap(), 0.6, max_relative = 1e-15);
    }

    #[test]
    fn general_h_uses_primitive() {
        let op = SpectralOperator::new(vec![1.0]).unwrap();
        let params = ModelParams::prototype(0.1, 0.0, 1.0)
            .unwrap()
            .with_nonlinearity(|s| 1.0 + s, 1.0, "1+s");
        let e = energy_snapshot(&params, &op, &state(&[2.0], &[1.0])).unwrap();
        // ε|v|² + ∫₀⁴ (1+s) ds = 0.1 + 4 + 8
        assert_relative_eq!(e.h, 12.1, max_relative = 1e-10);
    }

    fn vecs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..8).prop_flat_map(|n| {
            (
                prop::collection::vec(0.01f64..20.0, n),
                prop::collection::vec(-5.0f64..5.0, n),
                prop::collection::vec(-5.0f64..5.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn p_first_summand_nonnegative_and_direct_form_agrees((l, u, v) in vecs(), eps in 1e-3f64..1.0, gamma in 0.5f64..3.0) {
            let op = SpectralOperator::new(l).unwrap();
            let params = ModelParams::prototype(eps, 0.5, gamma).unwrap();
            let s = state(&u, &v);
            let e = energy_snapshot(&params, &op, &s).unwrap();
            prop_assume!(!e.degenerate && e.norm_a12u2 > 1e-6);
            let first = e.p.unwrap() - e.norm_au2 / e.norm_a12u2;
            let defect = transverse_defect(op.eigenvalues(), s.u.coeffs(), s.v.coeffs());
            prop_assert!(defect >= 0.0);
            let direct = e.norm_a12u2 * e.norm_a12v2 - e.inner_au_v.powi(2);
            prop_assert!((defect - direct).abs() <= 1e-9 * (e.norm_a12u2 * e.norm_a12v2).max(1.0));
            prop_assert!(first >= -1e-12 * e.p.unwrap().abs());
            if op.dim() == 1 {
                prop_assert_eq!(defect, 0.0);
            }
            let q = e.q.unwrap() * e.norm_a12u2.powf(2.0 * gamma + 1.0);
            prop_assert!((q - e.norm_v2).abs() <= 1e-10 * e.norm_v2.max(1e-300));
        }

        #[test]
        fn homogeneity_under_scaling((l, u, v) in vecs(), s in 0.1f64..10.0, gamma in 0.5f64..3.0) {
            let op = SpectralOperator::new(l).unwrap();
            let params = ModelParams::prototype(0.1, 0.5, gamma).unwrap();
            let a = energy_snapshot(&params, &op, &state(&u, &v)).unwrap();
            prop_assume!(!a.degenerate && a.norm_a12u2 > 1e-6);
            let us: Vec<f64> = u.iter().map(|x| s * x).collect();
            let vs: Vec<f64> = v.iter().map(|x| s * x).collect();
            let b = energy_snapshot(&params, &op, &state(&us, &vs)).unwrap();
            prop_assert!((b.norm_a12u2 - s * s * a.norm_a12u2).abs() <= 1e-12 * b.norm_a12u2);
            // (u, u') ↦ s(u, u'): Q scales as s^{2-(8γ+4)/2} = s^{-4γ}
            let expect = a.q.unwrap() * s.powf(-4.0 * gamma);
            prop_assert!((b.q.unwrap() - expect).abs() <= 1e-9 * expect.max(1e-300));
            // P's second summand is scale-free
            let ra = a.norm_au2 / a.norm_a12u2;
            let rb = b.norm_au2 / b.norm_a12u2;
            prop_assert!((ra - rb).abs() <= 1e-12 * ra);
        }
    }
}
