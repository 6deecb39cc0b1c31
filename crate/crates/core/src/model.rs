//! Right-hand sides of the damped Kirchhoff equation
//!
//! ```text
//! ε u'' + b(t) u' + m(|A^{1/2}u|²) A u = 0
//! ```
//!
//! and of its first-order limit `b(t) u' + m(|A^{1/2}u|²) A u = 0`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{usage, Error, Result};
use crate::spectral::{weighted_sq, SpectralOperator, StateVector};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Stiffness coefficient `m(σ)`.
#[derive(Clone)]
pub enum Nonlinearity {
    /// `m(σ) = σ^γ` using the model's `gamma`.
    Power,
    /// User-supplied `m`; `mu` records `inf m`.
    General { m: ScalarFn, mu: f64, label: String },
}

/// Damping coefficient `b(t)`.
#[derive(Clone)]
pub enum Damping {
    /// `b(t) = (1+t)^{-p}` using the model's `p`.
    Power,
    /// User-supplied `b`, expected positive.
    General { b: ScalarFn, label: String },
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Power => write!(f, "Power"),
            Self::General { mu, label, .. } => write!(f, "General({label}, mu={mu})"),
        }
    }
}

impl fmt::Debug for Damping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Power => write!(f, "Power"),
            Self::General { label, .. } => write!(f, "General({label})"),
        }
    }
}

/// Parameters `(ε, p, γ)` plus the choice of `m` and `b`.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub epsilon: f64,
    pub p: f64,
    pub gamma: f64,
    pub nonlinearity: Nonlinearity,
    pub damping: Damping,
}

impl ModelParams {
    /// The prototype `m(σ) = σ^γ`, `b(t) = (1+t)^{-p}`.
    pub fn prototype(epsilon: f64, p: f64, gamma: f64) -> Result<Self> {
        let params = Self {
            epsilon,
            p,
            gamma,
            nonlinearity: Nonlinearity::Power,
            damping: Damping::Power,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_nonlinearity(mut self, m: impl Fn(f64) -> f64 + Send + Sync + 'static, mu: f64, label: &str) -> Self {
        self.nonlinearity = Nonlinearity::General {
            m: Arc::new(m),
            mu,
            label: label.to_string(),
        };
        self
    }

    pub fn with_damping(mut self, b: impl Fn(f64) -> f64 + Send + Sync + 'static, label: &str) -> Self {
        self.damping = Damping::General {
            b: Arc::new(b),
            label: label.to_string(),
        };
        self
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(usage(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.p >= 0.0 && self.p.is_finite()) {
            return Err(usage(format!("p must be nonnegative, got {}", self.p)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(usage(format!("gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn is_prototype(&self) -> bool {
        matches!(
            (&self.nonlinearity, &self.damping),
            (Nonlinearity::Power, Damping::Power)
        )
    }

    /// `m(σ)`; the power law returns exactly 0 at `σ = 0`.
    #[inline]
    pub fn m(&self, sigma: f64) -> f64 {
        match &self.nonlinearity {
            Nonlinearity::Power => sigma.powf(self.gamma),
            Nonlinearity::General { m, .. } => m(sigma),
        }
    }

    /// `inf m`, zero for the degenerate power law.
    pub fn mu(&self) -> f64 {
        match &self.nonlinearity {
            Nonlinearity::Power => 0.0,
            Nonlinearity::General { mu, .. } => *mu,
        }
    }

    #[inline]
    pub fn b(&self, t: f64) -> f64 {
        match &self.damping {
            Damping::Power => (1.0 + t).powf(-self.p),
            Damping::General { b, .. } => b(t),
        }
    }

    /// `∫₀^σ m(s) ds`; closed form for the power law, adaptive quadrature otherwise.
    pub fn m_primitive(&self, sigma: f64) -> f64 {
        match &self.nonlinearity {
            Nonlinearity::Power => sigma.powf(self.gamma + 1.0) / (self.gamma + 1.0),
            Nonlinearity::General { m, .. } => crate::quadrature::integrate(|s| m(s), 0.0, sigma, 1e-10)
                .map(|q| q.value)
                .unwrap_or(f64::NAN),
        }
    }

    /// `∫₀ᵗ b(s) ds`.
    pub fn b_integral(&self, t: f64) -> f64 {
        match &self.damping {
            Damping::Power => power_damping_integral(self.p, t),
            Damping::General { b, .. } => {
                // geometric pieces keep each quadrature interval well scaled
                let mut total = 0.0;
                let (mut lo, mut hi) = (0.0, t.min(1.0));
                while lo < t {
                    match crate::quadrature::integrate(|s| b(s), lo, hi, 1e-10) {
                        Ok(q) => total += q.value,
                        Err(_) => return f64::NAN,
                    }
                    lo = hi;
                    hi = (hi * 4.0).min(t);
                }
                total
            }
        }
    }

    pub(crate) fn describe(&self) -> ModelDescription {
        ModelDescription {
            epsilon: self.epsilon,
            p: self.p,
            gamma: self.gamma,
            nonlinearity: match &self.nonlinearity {
                Nonlinearity::Power => "sigma^gamma".to_string(),
                Nonlinearity::General { label, .. } => label.clone(),
            },
            damping: match &self.damping {
                Damping::Power => "(1+t)^-p".to_string(),
                Damping::General { label, .. } => label.clone(),
            },
        }
    }
}

/// `∫₀ᵗ (1+s)^{-p} ds`.
pub fn power_damping_integral(p: f64, t: f64) -> f64 {
    if (p - 1.0).abs() < 1e-14 {
        (1.0 + t).ln()
    } else {
        ((1.0 + t).powf(1.0 - p) - 1.0) / (1.0 - p)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelDescription {
    pub epsilon: f64,
    pub p: f64,
    pub gamma: f64,
    pub nonlinearity: String,
    pub damping: String,
}

/// Time, position and velocity in eigencoordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub t: f64,
    pub u: StateVector,
    pub v: StateVector,
}

impl PhaseState {
    pub fn new(t: f64, u: StateVector, v: StateVector) -> Result<Self> {
        if u.len() != v.len() {
            return Err(usage(format!(
                "position has {} coefficients, velocity has {}",
                u.len(),
                v.len()
            )));
        }
        Ok(Self { t, u, v })
    }

    pub fn at_rest(u: StateVector) -> Self {
        let n = u.len();
        Self {
            t: 0.0,
            u,
            v: StateVector::zeros(n),
        }
    }
}

fn check_dims(op: &SpectralOperator, n: usize) -> Result<()> {
    if op.dim() != n {
        return Err(usage(format!(
            "state has {n} coefficients but the spectrum has {}",
            op.dim()
        )));
    }
    Ok(())
}

/// First-order form of the hyperbolic equation: `(u' , v') = (v, -(b v + m A u)/ε)`.
pub fn hyperbolic_rhs(
    params: &ModelParams,
    op: &SpectralOperator,
    s: &PhaseState,
) -> Result<(StateVector, StateVector)> {
    check_dims(op, s.u.len())?;
    check_dims(op, s.v.len())?;
    let n = op.dim();
    let mut dv = vec![0.0; n];
    hyperbolic_accel(params, op.eigenvalues(), s.t, s.u.coeffs(), s.v.coeffs(), &mut dv);
    Ok((s.v.clone(), StateVector::new(dv)))
}

/// Writes `u'' = -(b(t) v + m(|A^{1/2}u|²) A u)/ε` into `out`.
#[inline]
pub(crate) fn hyperbolic_accel(params: &ModelParams, lambda: &[f64], t: f64, u: &[f64], v: &[f64], out: &mut [f64]) {
    let m = params.m(weighted_sq(lambda, u, 1.0));
    let b = params.b(t);
    let eps = params.epsilon;
    for k in 0..lambda.len() {
        out[k] = -(b * v[k] + m * lambda[k] * u[k]) / eps;
    }
}

/// Limit problem: `u' = -m(|A^{1/2}u|²) A u / b(t)`.
pub fn parabolic_rhs(params: &ModelParams, op: &SpectralOperator, t: f64, u: &StateVector) -> Result<StateVector> {
    check_dims(op, u.len())?;
    let mut du = vec![0.0; op.dim()];
    parabolic_velocity(params, op.eigenvalues(), t, u.coeffs(), &mut du)?;
    Ok(StateVector::new(du))
}

#[inline]
pub(crate) fn parabolic_velocity(
    params: &ModelParams,
    lambda: &[f64],
    t: f64,
    u: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let b = params.b(t);
    if !(b > 0.0) {
        return Err(Error::Model(format!("damping b({t}) = {b} is not positive")));
    }
    let m = params.m(weighted_sq(lambda, u, 1.0));
    for k in 0..lambda.len() {
        out[k] = -m * lambda[k] * u[k] / b;
    }
    Ok(())
}

/// Exact `|A^{1/2}u(t)|²` for the limit problem with a single excited eigenvalue `λ`:
/// the solution of `w' = -2 λ (1+t)^p w^{γ+1}`, `w(0) = w0`.
pub fn scalar_parabolic_exact(w0: f64, lambda: f64, gamma: f64, p: f64, t: f64) -> f64 {
    let growth = ((1.0 + t).powf(p + 1.0) - 1.0) / (p + 1.0);
    w0 * (1.0 + 2.0 * gamma * lambda * w0.powf(gamma) * growth).powf(-1.0 / gamma)
}
