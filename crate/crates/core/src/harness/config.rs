//! Scenario files: flat TOML, one documented key per line.
//!
//! ```toml
//! name = "coercive"
//! mode = "hyperbolic"          # hyperbolic | parabolic | both
//! epsilon = 1e-3               # required unless mode = "parabolic"
//! p = 0.5
//! gamma = 1.0
//! spectrum = "power"           # power | inverse_power | explicit
//! spectrum_exponent = 2.0      # λ_k = k^e or k^-e
//! modes = 8
//! # eigenvalues = [1.0, 4.0]   # with spectrum = "explicit"
//! u0 = "first_mode"            # first_mode | uniform | zero | random(seed) | [c1, c2, ...]
//! u1 = "zero"
//! t_end = 1e5
//! audit = true
//! fit = ["a12u2", "au2", "v2"]
//! output_dir = "runs/coercive"
//! ```

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energies::TheoremMode;
use crate::error::{config, Error, Result};
use crate::integrator::{IntegrationSpec, Sampling};
use crate::model::ModelParams;
use crate::rates::Quantity;
use crate::spectral::{SpectralOperator, StateVector};

/// Environment variable that relocates relative `output_dir`s.
pub const OUTPUT_ROOT_ENV: &str = "KIRCHHOFF_OUTPUT_ROOT";

/// Keys every scenario must set.
pub const REQUIRED_KEYS: [&str; 5] = ["mode", "p", "gamma", "u0", "t_end"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Hyperbolic,
    Parabolic,
    /// Both flows from the same data, plus the gap between them.
    Both,
}

impl RunMode {
    pub fn hyperbolic(&self) -> bool {
        matches!(self, RunMode::Hyperbolic | RunMode::Both)
    }

    pub fn parabolic(&self) -> bool {
        matches!(self, RunMode::Parabolic | RunMode::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    Power,
    InversePower,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingKind {
    Log,
    Uniform,
}

/// Initial data: explicit coefficients or a named preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSpec {
    Coeffs(Vec<f64>),
    Preset(String),
}

impl DataSpec {
    /// Coefficients for `n` modes; `key` names the config entry in errors.
    pub fn resolve(&self, n: usize, key: &str) -> Result<StateVector> {
        match self {
            DataSpec::Coeffs(c) => {
                if c.len() != n {
                    return Err(config(key, format!("{} coefficients given for {n} modes", c.len())));
                }
                if c.iter().any(|x| !x.is_finite()) {
                    return Err(config(key, "coefficients must be finite"));
                }
                Ok(StateVector::new(c.clone()))
            }
            DataSpec::Preset(name) => match name.as_str() {
                "zero" => Ok(StateVector::zeros(n)),
                "first_mode" => Ok(StateVector::basis(n, 0)),
                "uniform" => Ok(StateVector::new(vec![1.0; n])),
                other => {
                    let seed = other
                        .strip_prefix("random(")
                        .and_then(|s| s.strip_suffix(')'))
                        .and_then(|s| s.trim().parse::<u64>().ok())
                        .ok_or_else(|| {
                            config(
                                key,
                                format!("unknown preset `{other}` (expected zero, first_mode, uniform, random(<seed>) or a list)"),
                            )
                        })?;
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    Ok(StateVector::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()))
                }
            },
        }
    }
}

fn default_name() -> String {
    "scenario".into()
}
fn default_zero() -> DataSpec {
    DataSpec::Preset("zero".into())
}
fn default_rel_tol() -> f64 {
    1e-9
}
fn default_abs_tol() -> f64 {
    1e-12
}
fn default_sampling() -> SamplingKind {
    SamplingKind::Log
}
fn default_samples() -> usize {
    400
}
fn default_max_steps() -> u64 {
    50_000_000
}
fn default_audit_tol() -> f64 {
    crate::energies::AUDIT_TOL
}
fn default_gap_horizon() -> f64 {
    10.0
}
fn default_output_dir() -> String {
    "out".into()
}
fn default_true() -> bool {
    true
}

/// A validated-on-demand scenario. Serializes back to the same keys, so the
/// copy echoed in a manifest re-runs the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub mode: RunMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub p: f64,
    pub gamma: f64,
    #[serde(default = "default_spectrum")]
    pub spectrum: SpectrumKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    pub u0: DataSpec,
    #[serde(default = "default_zero")]
    pub u1: DataSpec,
    pub t_end: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_sampling")]
    pub sampling: SamplingKind,
    /// Output times on the log grid.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Output spacing for `sampling = "uniform"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_out: Option<f64>,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default)]
    pub audit: bool,
    #[serde(default = "default_audit_tol")]
    pub audit_tol: f64,
    /// Defaults to coercive when the smallest eigenvalue is positive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem_mode: Option<TheoremMode>,
    #[serde(default)]
    pub fit: Vec<Quantity>,
    /// Defaults to the last two decades, `[t_end/100, t_end]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
    /// Pick the widest trailing window (up to three decades) with at most this
    /// residual instead of a fixed window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_max_residual: Option<f64>,
    /// Slack on predicted exponents; defaults per quantity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_tolerance: Option<f64>,
    /// Run the non-decay check on this trailing fraction of the samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nondecay_tail: Option<f64>,
    /// Horizon of the hyperbolic/parabolic gap in `both` mode.
    #[serde(default = "default_gap_horizon")]
    pub gap_horizon: f64,
    #[serde(default = "default_true")]
    pub plots: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

fn default_spectrum() -> SpectrumKind {
    SpectrumKind::Power
}

/// Parses a scenario, reporting missing keys by name and syntax errors with their line.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::ConfigSyntax(e.to_string()))?;
    for key in REQUIRED_KEYS {
        if !table.contains_key(key) {
            return Err(config(key, "missing required key"));
        }
    }
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::ConfigSyntax(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<ScenarioConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn positive(key: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(config(key, format!("must be positive and finite, got {x}")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mode.hyperbolic() {
            match self.epsilon {
                None => return Err(config("epsilon", "missing required key in hyperbolic mode")),
                Some(e) => positive("epsilon", e)?,
            }
        }
        if !(self.p >= 0.0 && self.p.is_finite()) {
            return Err(config("p", format!("must be nonnegative, got {}", self.p)));
        }
        positive("gamma", self.gamma)?;
        positive("t_end", self.t_end)?;
        positive("rel_tol", self.rel_tol)?;
        positive("abs_tol", self.abs_tol)?;
        positive("audit_tol", self.audit_tol)?;
        positive("gap_horizon", self.gap_horizon)?;
        if self.max_steps == 0 {
            return Err(config("max_steps", "must be at least 1"));
        }
        match self.sampling {
            SamplingKind::Log if self.samples < 2 => return Err(config("samples", "need at least 2")),
            SamplingKind::Uniform => positive(
                "dt_out",
                self.dt_out
                    .ok_or_else(|| config("dt_out", "required for uniform sampling"))?,
            )?,
            _ => {}
        }
        if let Some([lo, hi]) = self.fit_window {
            if !(lo >= 0.0 && lo < hi) {
                return Err(config("fit_window", format!("need 0 <= lo < hi, got [{lo}, {hi}]")));
            }
        }
        if let Some(r) = self.fit_max_residual {
            positive("fit_max_residual", r)?;
            if self.fit_window.is_some() {
                return Err(config("fit_max_residual", "conflicts with fit_window"));
            }
        }
        if let Some(tol) = self.fit_tolerance {
            positive("fit_tolerance", tol)?;
        }
        if let Some(f) = self.nondecay_tail {
            if !(f > 0.0 && f <= 1.0) {
                return Err(config("nondecay_tail", "must lie in (0, 1]"));
            }
        }
        if self.audit && !self.mode.hyperbolic() {
            return Err(config("audit", "the a-priori audit needs a hyperbolic run"));
        }
        let op = self.operator()?;
        self.u0.resolve(op.dim(), "u0")?;
        self.u1.resolve(op.dim(), "u1")?;
        Ok(())
    }

    pub fn operator(&self) -> Result<SpectralOperator> {
        let wrap = |key: &str, r: Result<SpectralOperator>| r.map_err(|e| config(key, e.to_string()));
        match self.spectrum {
            SpectrumKind::Explicit => {
                let ev = self
                    .eigenvalues
                    .clone()
                    .ok_or_else(|| config("eigenvalues", "required for an explicit spectrum"))?;
                wrap("eigenvalues", SpectralOperator::new(ev))
            }
            kind => {
                let e = self
                    .spectrum_exponent
                    .ok_or_else(|| config("spectrum_exponent", "required for a generated spectrum"))?;
                let n = self
                    .modes
                    .ok_or_else(|| config("modes", "required for a generated spectrum"))?;
                if n == 0 {
                    return Err(config("modes", "must be at least 1"));
                }
                match kind {
                    SpectrumKind::Power => wrap("spectrum_exponent", SpectralOperator::power(e, n)),
                    _ => wrap("spectrum_exponent", SpectralOperator::inverse_power(e, n)),
                }
            }
        }
    }

    /// Model parameters; parabolic-only runs without `epsilon` use `ε = 1`,
    /// which the first-order flow never reads.
    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::prototype(self.epsilon.unwrap_or(1.0), self.p, self.gamma)
    }

    pub fn initial_data(&self) -> Result<(StateVector, StateVector)> {
        let n = self.operator()?.dim();
        Ok((self.u0.resolve(n, "u0")?, self.u1.resolve(n, "u1")?))
    }

    pub fn integration_spec(&self) -> IntegrationSpec {
        let sampling = match self.sampling {
            SamplingKind::Log => Sampling::LogGrid { points: self.samples },
            SamplingKind::Uniform => Sampling::Uniform {
                dt_out: self.dt_out.unwrap_or(self.t_end),
            },
        };
        let mut spec = IntegrationSpec::new(self.t_end)
            .tolerances(self.rel_tol, self.abs_tol)
            .sampling(sampling);
        spec.max_steps = self.max_steps;
        if self.audit {
            spec = spec.with_audit_integrals();
        }
        spec
    }

    pub fn theorem_mode(&self) -> Result<TheoremMode> {
        Ok(self.theorem_mode.unwrap_or(if self.operator()?.is_coercive() {
            TheoremMode::Coercive
        } else {
            TheoremMode::Noncoercive
        }))
    }

    /// `output_dir`, placed under `$KIRCHHOFF_OUTPUT_ROOT` when relative and the variable is set.
    pub fn resolved_output_dir(&self) -> PathBuf {
        let dir = PathBuf::from(&self.output_dir);
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
            _ => dir,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
mode = "hyperbolic"
epsilon = 1e-3
p = 0.5
gamma = 1.0
spectrum = "power"
spectrum_exponent = 2.0
modes = 8
u0 = "first_mode"
t_end = 10.0
"#;

    #[test]
    fn parses_defaults() {
        let c = parse_config(BASE).unwrap();
        assert_eq!(c.samples, 400);
        assert_eq!(c.u1, DataSpec::Preset("zero".into()));
        assert_eq!(c.operator().unwrap().eigenvalues()[7], 64.0);
        assert_eq!(c.theorem_mode().unwrap(), TheoremMode::Coercive);
    }

    #[test]
    fn missing_epsilon_names_the_key() {
        let text = BASE.replace("epsilon = 1e-3\n", "");
        match parse_config(&text) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "epsilon"),
            other => panic!("{other:?}"),
        }
        let par = text.replace("\"hyperbolic\"", "\"parabolic\"");
        assert!(parse_config(&par).is_ok());
        match parse_config(&BASE.replace("t_end = 10.0\n", "")) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "t_end"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let err = parse_config(&format!("{BASE}p = \n")).unwrap_err();
        assert!(matches!(err, Error::ConfigSyntax(ref m) if m.contains("line")), "{err}");
        let err = parse_config(&format!("{BASE}colour = 1\n")).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn presets_and_lists() {
        let c = parse_config(&BASE.replace("\"first_mode\"", "\"random(9)\"")).unwrap();
        let (a, _) = c.initial_data().unwrap();
        let (b, _) = c.initial_data().unwrap();
        assert_eq!(a, b);
        assert!(a.coeffs().iter().all(|x| x.abs() < 1.0));
        let bad = BASE.replace("\"first_mode\"", "[1.0, 2.0]");
        assert!(matches!(parse_config(&bad), Err(Error::Config { ref key, .. }) if key == "u0"));
        let bad = BASE.replace("\"first_mode\"", "\"gaussian\"");
        assert!(matches!(parse_config(&bad), Err(Error::Config { ref key, .. }) if key == "u0"));
    }

    #[test]
    fn echo_round_trips() {
        let c = parse_config(&format!("{BASE}fit = [\"a12u2\", \"v2\"]\nfit_window = [1.0, 10.0]\n")).unwrap();
        assert_eq!(parse_config(&c.to_toml()).unwrap(), c);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ScenarioConfig>(&json).unwrap(), c);
    }
}
