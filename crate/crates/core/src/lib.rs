//! Spectral-Galerkin simulation of the damped Kirchhoff equation
//!
//! ```text
//! ε u'' + b(t) u' + m(|A^{1/2}u|²) A u = 0
//! ```
//!
//! and its first-order limit, with energy functionals, decay-rate fits and
//! comparison-lemma checks built on top.

pub mod comparison;
pub mod energies;
pub mod error;
pub mod harness;
pub mod integrator;
pub mod model;
pub mod quadrature;
pub mod rates;
pub mod spectral;

pub use error::{Error, Result};
pub use integrator::{
    integrate_hyperbolic, integrate_parabolic, measure_perturbation_gap, IntegrationSpec, Sampling, Termination,
    Trajectory,
};
pub use model::{ModelParams, PhaseState};
pub use spectral::{SpectralOperator, StateVector};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod chapter1 {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/model.md")]
mod chapter2 {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/integration.md")]
mod chapter3 {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/energies.md")]
mod chapter4 {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/rates.md")]
mod chapter5 {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/comparison.md")]
mod chapter6 {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/harness.md")]
mod chapter7 {}
