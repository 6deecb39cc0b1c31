//! Finite spectral representation of a nonnegative self-adjoint operator.
//!
//! Every element of the state space is stored by its coordinates in the
//! eigenbasis of `A`, so powers `A^α` act diagonally and all norms reduce to
//! weighted sums over the spectrum.

use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};

/// The operator `A` truncated to its first `N` eigenvalues, sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralOperator {
    eigenvalues: Vec<f64>,
    nu: f64,
}

impl SpectralOperator {
    /// Builds the operator from an arbitrary list of eigenvalues.
    ///
    /// The list is sorted ascending; duplicates are kept.
    pub fn new(mut eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(usage("spectrum must contain at least one eigenvalue"));
        }
        if let Some(bad) = eigenvalues.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(usage(format!("eigenvalue {bad} is not a finite nonnegative real")));
        }
        eigenvalues.sort_by(f64::total_cmp);
        let nu = eigenvalues[0];
        Ok(Self { eigenvalues, nu })
    }

    /// `λ_k = k^exponent`, `k = 1..=count`.
    pub fn power(exponent: f64, count: usize) -> Result<Self> {
        Self::new((1..=count).map(|k| (k as f64).powf(exponent)).collect())
    }

    /// `λ_k = k^-exponent`, a family accumulating at zero.
    pub fn inverse_power(exponent: f64, count: usize) -> Result<Self> {
        Self::new((1..=count).map(|k| (k as f64).powf(-exponent)).collect())
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Coercivity constant `ν = inf <Ax,x>/|x|²`, i.e. the smallest eigenvalue.
    pub fn coercivity(&self) -> f64 {
        self.nu
    }

    pub fn is_coercive(&self) -> bool {
        self.nu > 0.0
    }

    fn check(&self, u: &StateVector) -> Result<()> {
        if u.len() != self.dim() {
            return Err(usage(format!(
                "state has {} coefficients but the spectrum has {}",
                u.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `|A^α u|`, with the convention `0⁰ = 1`.
    pub fn norm_alpha(&self, u: &StateVector, alpha: f64) -> Result<f64> {
        self.check(u)?;
        if !(alpha >= 0.0) {
            return Err(usage(format!("alpha must be nonnegative, got {alpha}")));
        }
        Ok(self.weighted_sq(u, 2.0 * alpha).sqrt())
    }

    /// `<Au, v>`.
    pub fn inner_au_v(&self, u: &StateVector, v: &StateVector) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.inner_au_v_unchecked(u.coeffs(), v.coeffs()))
    }

    /// `Σ λ_k^power u_k²`; `power = 0` gives `|u|²` exactly.
    pub(crate) fn weighted_sq(&self, u: &StateVector, power: f64) -> f64 {
        weighted_sq(&self.eigenvalues, u.coeffs(), power)
    }

    pub(crate) fn inner_au_v_unchecked(&self, u: &[f64], v: &[f64]) -> f64 {
        self.eigenvalues
            .iter()
            .zip(u.iter().zip(v))
            .map(|(l, (a, b))| l * a * b)
            .sum()
    }

    /// `A u` as a new coefficient vector.
    pub fn apply(&self, u: &StateVector) -> Result<StateVector> {
        self.check(u)?;
        Ok(StateVector::new(
            self.eigenvalues.iter().zip(u.coeffs()).map(|(l, x)| l * x).collect(),
        ))
    }
}

pub(crate) fn weighted_sq(eigenvalues: &[f64], u: &[f64], power: f64) -> f64 {
    if power == 0.0 {
        return u.iter().map(|x| x * x).sum();
    }
    eigenvalues
        .iter()
        .zip(u)
        .map(|(l, x)| {
            // 0⁰ = 1 is handled above; a zero eigenvalue with positive power contributes 0.
            let w = if power == 1.0 {
                *l
            } else if power == 2.0 {
                l * l
            } else {
                l.powf(power)
            };
            w * x * x
        })
        .sum()
}

/// Coordinates of an element of `H` in the eigenbasis of `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector {
    coeffs: Vec<f64>,
}

impl StateVector {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(n: usize) -> Self {
        Self { coeffs: vec![0.0; n] }
    }

    /// Unit vector along the `k`-th eigenvector (0-based).
    pub fn basis(n: usize, k: usize) -> Self {
        let mut coeffs = vec![0.0; n];
        coeffs[k] = 1.0;
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `|u|²`.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|x| x * x).sum()
    }

    pub fn dot(&self, other: &StateVector) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.coeffs.iter().map(|x| s * x).collect())
    }

    /// `|u - v|`.
    pub fn distance(&self, other: &StateVector) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(coeffs: Vec<f64>) -> Self {
        Self::new(coeffs)
    }
}
