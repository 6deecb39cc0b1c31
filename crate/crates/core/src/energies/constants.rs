use serde::{Deserialize, Serialize};

use super::energy_snapshot;
use crate::error::{usage, Error, Result};
use crate::model::{ModelParams, PhaseState};
use crate::spectral::{SpectralOperator, StateVector};

/// Factor by which `K` exceeds the larger of its two lower bounds.
pub const K_MARGIN: f64 = 1.01;

/// Which family of estimates applies: coercive (`ν > 0`) or noncoercive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremMode {
    Coercive,
    Noncoercive,
}

/// Constants of the a-priori estimates for given data `(u₀, u₁)`.
///
/// `p1_0`, `q1_0`, `r1_0` are the time-zero energies at `ε = 1`; the other
/// `*_0` fields use the model's own `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremConstants {
    pub mode: TheoremMode,
    pub sigma0: f64,
    pub sigma1: f64,
    /// Only defined for coercive operators.
    pub sigma2: Option<f64>,
    pub sigma3: f64,
    pub sigma4: f64,
    #[serde(rename = "K")]
    pub k: f64,
    /// The two lower bounds `K` must strictly exceed.
    pub k_lower_bounds: [f64; 2],
    pub k_margin: f64,
    pub eps0: f64,
    pub beta: f64,
    pub p1_0: f64,
    pub q1_0: f64,
    pub r1_0: f64,
    pub f_0: f64,
    pub h_0: f64,
    pub d_0: f64,
    pub dhat_0: f64,
    pub g_0: f64,
}

pub fn compute_constants(
    params: &ModelParams,
    op: &SpectralOperator,
    u0: &StateVector,
    u1: &StateVector,
    mode: TheoremMode,
) -> Result<TheoremConstants> {
    params.validate()?;
    let init = PhaseState::new(0.0, u0.clone(), u1.clone())?;
    let unit = energy_snapshot(&params.with_epsilon(1.0), op, &init)?;
    let run = energy_snapshot(params, op, &init)?;
    if unit.degenerate {
        return Err(Error::Precondition(
            "A^{1/2}u0 = 0: constants need nondegenerate data".into(),
        ));
    }
    let nu = op.coercivity();
    let gamma = params.gamma;
    let p = params.p;
    match mode {
        TheoremMode::Coercive if !(nu > 0.0) => {
            return Err(Error::Mode(format!(
                "coercive constants need ν > 0, spectrum has ν = {nu}"
            )))
        }
        TheoremMode::Noncoercive if gamma < 1.0 => {
            return Err(Error::Mode(format!(
                "noncoercive constants need γ ≥ 1, got γ = {gamma}"
            )))
        }
        _ => {}
    }

    let w0 = unit.norm_a12u2;
    let w0g = w0.powf(gamma);
    let inner = unit.inner_au_v.abs();
    let (p1, q1, r1) = (unit.p.unwrap(), unit.q.unwrap(), unit.r.unwrap());
    let pq = (p1 * q1).sqrt() + 2.0 * p1;

    let sigma1 = w0 * (1.0 + 3.0 * gamma * p1 * w0g / (p + 1.0)).powf(-1.0 / gamma);
    let sigma2 = (nu > 0.0).then(|| w0 * f64::max(2.0, (p + 1.0) / (nu * gamma * w0g)).powf(1.0 / gamma));
    let sigma3 = 16.0 * (gamma + 1.0) * (u1.norm_sq() + w0g * w0 + 2.0 * u0.norm_sq());
    let sigma4 =
        2.0 * unit.norm_a12v2 / w0g + 2.0 * unit.norm_au2 + 0.5 * inner / w0g + 36.0 * sigma1.powf(1.0 - gamma);

    let second_bound = match mode {
        TheoremMode::Coercive => pq * sigma2.expect("checked coercive").powf(gamma),
        TheoremMode::Noncoercive => {
            ((1.0 + gamma) * sigma3).powf((gamma - 1.0) / (gamma + 1.0))
                * (u1.norm_sq().sqrt() / w0g * sigma4.sqrt() + 4.0 * sigma4)
        }
    };
    let k_lower_bounds = [inner / w0, second_bound];
    let k = K_MARGIN * k_lower_bounds[0].max(k_lower_bounds[1]);

    let sigma0 = inner / (w0g * w0) + 1.5 * pq + (2.0 * gamma + 3.0) * (r1 + 2.0 * (k + 1.0) * p1);

    let mut eps0 = f64::min(0.25, 1.0 / (4.0 * k * (gamma + 1.0)));
    eps0 = eps0.min(f64::min(1.0 / (4.0 * gamma * w0g), p1 / (2.0 * (p + 1.0))) / sigma0);
    match mode {
        TheoremMode::Coercive => {
            eps0 = eps0.min(f64::min(nu / (2.0 * (p + 1.0)), 1.0 / (4.0 * gamma * w0g)) / sigma0);
        }
        TheoremMode::Noncoercive => eps0 = eps0.min(1.0 / 16.0),
    }
    if !(eps0 > 0.0 && eps0.is_finite()) {
        return Err(Error::Numeric(format!("eps0 evaluated to {eps0}")));
    }
    if !k.is_finite() {
        return Err(usage("K is not finite for these data"));
    }

    Ok(TheoremConstants {
        mode,
        sigma0,
        sigma1,
        sigma2,
        sigma3,
        sigma4,
        k,
        k_lower_bounds,
        k_margin: K_MARGIN,
        eps0,
        beta: (p + 1.0) / gamma,
        p1_0: p1,
        q1_0: q1,
        r1_0: r1,
        f_0: run.f.unwrap(),
        h_0: run.h,
        d_0: run.d,
        dhat_0: run.dhat.unwrap(),
        g_0: run.g.unwrap(),
    })
}
