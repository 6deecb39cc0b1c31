//! Randomized oracle suites for the comparison bounds.
//!
//! Each instance is a plain serializable value; evaluating it is
//! deterministic, so a failing instance printed as JSON replays exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    check_f_condition, integrate_comparison_ode, integrate_scalar, lemma1_bound, lemma2_lower, lemma2_upper,
    uniform_times, ComparisonProblem, Perturbation, COMPARISON_SAMPLES,
};
use crate::error::{usage, Error, Result};

/// Relative slack allowed on the first bound.
pub const LEMMA1_TOL: f64 = 1e-9;
/// Relative slack allowed on the envelopes and on closed-form agreement.
pub const LEMMA2_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "lemma", rename_all = "snake_case")]
pub enum LemmaInstance {
    /// `f' = -(c1 + slack) f/(1+t)^p + c2 √f`; `slack = 0` is the extremal case.
    First {
        c1: f64,
        c2: f64,
        p: f64,
        f0: f64,
        horizon: f64,
        slack: f64,
    },
    /// The reference equation plus `w' = -(1+t)^p w^{γ+1}(2(α+f) ± kappa)`.
    Second { problem: ComparisonProblem, kappa: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaOutcome {
    /// `max value/upper bound` over the samples.
    pub upper_margin: f64,
    /// `max lower bound/value`; second lemma only.
    pub lower_margin: Option<f64>,
    /// Closed-form vs numeric `z`; second lemma only.
    pub closed_form_err: Option<f64>,
    pub passed: bool,
}

impl LemmaInstance {
    pub fn evaluate(&self) -> Result<LemmaOutcome> {
        match self {
            LemmaInstance::First {
                c1,
                c2,
                p,
                f0,
                horizon,
                slack,
            } => {
                let (c1, c2, p) = (*c1, *c2, *p);
                if !(c1 > 0.0 && c2 >= 0.0 && *f0 >= 0.0) {
                    return Err(usage("first-lemma instance needs c1 > 0, c2 >= 0, f0 >= 0"));
                }
                let times = uniform_times(*horizon, COMPARISON_SAMPLES);
                let k = c1 + slack;
                let f = integrate_scalar(|t, y| -k * y / (1.0 + t).powf(p) + c2 * y.max(0.0).sqrt(), *f0, &times)?;
                let upper_margin = times
                    .iter()
                    .zip(&f)
                    .map(|(t, y)| y / lemma1_bound(*f0, c1, c2, p, *t))
                    .fold(0.0, f64::max);
                Ok(LemmaOutcome {
                    upper_margin,
                    lower_margin: None,
                    closed_form_err: None,
                    passed: upper_margin <= 1.0 + LEMMA1_TOL,
                })
            }
            LemmaInstance::Second { problem, kappa } => {
                let z = integrate_comparison_ode(problem)?;
                let (alpha, gamma, p) = (problem.alpha, problem.gamma, problem.p);
                let branch = |sign: f64| {
                    integrate_scalar(
                        |t, w| {
                            -(1.0 + t).powf(p)
                                * w.max(0.0).powf(gamma + 1.0)
                                * (2.0 * (alpha + problem.f.eval(t)) + sign * kappa)
                        },
                        problem.w0,
                        &z.times,
                    )
                };
                let sub = branch(1.0)?;
                let sup = branch(-1.0)?;
                let mut upper_margin: f64 = 0.0;
                let mut lower_margin: f64 = 0.0;
                for (i, &t) in z.times.iter().enumerate() {
                    let (lo, hi) = (lemma2_lower(problem, t), lemma2_upper(problem, t));
                    upper_margin = upper_margin.max(z.numeric[i].max(sub[i]) / hi);
                    lower_margin = lower_margin.max(lo / z.numeric[i].min(sup[i]));
                }
                Ok(LemmaOutcome {
                    upper_margin,
                    lower_margin: Some(lower_margin),
                    closed_form_err: Some(z.max_rel_err),
                    passed: upper_margin <= 1.0 + LEMMA2_TOL
                        && lower_margin <= 1.0 + LEMMA2_TOL
                        && z.max_rel_err <= LEMMA2_TOL,
                })
            }
        }
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn first_instance(rng: &mut ChaCha8Rng) -> LemmaInstance {
    LemmaInstance::First {
        c1: log_uniform(rng, 0.05, 10.0),
        c2: if rng.gen_bool(0.1) {
            0.0
        } else {
            log_uniform(rng, 0.01, 5.0)
        },
        p: rng.gen_range(0.0..1.5),
        f0: if rng.gen_bool(0.1) {
            0.0
        } else {
            log_uniform(rng, 1e-3, 10.0)
        },
        horizon: rng.gen_range(1.0..50.0),
        slack: if rng.gen_bool(0.5) {
            0.0
        } else {
            rng.gen_range(0.0..2.0)
        },
    }
}

/// Draws a perturbed problem and halves the perturbation until the
/// smallness condition holds.
fn second_instance(rng: &mut ChaCha8Rng) -> Result<LemmaInstance> {
    let w0 = log_uniform(rng, 0.1, 3.0);
    let alpha = log_uniform(rng, 0.2, 3.0);
    let gamma = log_uniform(rng, 0.3, 3.0);
    let p = rng.gen_range(0.0..1.5);
    let horizon = rng.gen_range(1.0..30.0);
    let omega = log_uniform(rng, 0.2, 5.0);
    let decay = rng.gen_range(0.0..1.5);
    let mut problem = ComparisonProblem::new(w0, alpha, gamma, p, Perturbation::Zero, horizon)?;
    let mut amplitude = problem.smallness() * (p + 1.0) * rng.gen_range(0.5..8.0) * omega.max(1.0);
    let kappa = rng.gen_range(0.0..alpha / 2.0);
    for _ in 0..64 {
        problem.f = Perturbation::Oscillating {
            amplitude,
            omega,
            decay,
        };
        if check_f_condition(&problem)?.satisfied {
            return Ok(LemmaInstance::Second { problem, kappa });
        }
        amplitude *= 0.5;
    }
    Err(Error::Numeric(
        "could not shrink the perturbation below the smallness bound".into(),
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteSummary {
    pub instances: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub worst_index: usize,
}

impl SuiteSummary {
    fn from_margins(margins: impl Iterator<Item = f64>, tol: f64) -> Self {
        let mut s = SuiteSummary {
            instances: 0,
            violations: 0,
            worst_margin: 0.0,
            worst_index: 0,
        };
        for (i, m) in margins.enumerate() {
            s.instances += 1;
            if !(m <= 1.0 + tol) {
                s.violations += 1;
            }
            if !(m <= s.worst_margin) {
                s.worst_margin = m;
                s.worst_index = i;
            }
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FailedInstance {
    pub index: usize,
    pub instance: LemmaInstance,
    pub outcome: Option<LemmaOutcome>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaSuiteReport {
    pub seed: u64,
    pub count: usize,
    pub lemma1: SuiteSummary,
    pub lemma2_upper: SuiteSummary,
    pub lemma2_lower: SuiteSummary,
    pub closed_form_max_rel_err: f64,
    pub failures: Vec<FailedInstance>,
}

impl LemmaSuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Instances the suites evaluate for `(seed, count)`: `count` of each lemma.
pub fn generate_instances(seed: u64, count: usize) -> Result<(Vec<LemmaInstance>, Vec<LemmaInstance>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = (0..count).map(|_| first_instance(&mut rng)).collect();
    let second = (0..count).map(|_| second_instance(&mut rng)).collect::<Result<_>>()?;
    Ok((first, second))
}

/// Runs `count` randomized instances of each comparison bound.
pub fn run_lemma_suites(seed: u64, count: usize) -> Result<LemmaSuiteReport> {
    if count == 0 {
        return Err(usage("count must be at least 1"));
    }
    let (first, second) = generate_instances(seed, count)?;
    let eval =
        |list: &[LemmaInstance]| -> Vec<Result<LemmaOutcome>> { list.par_iter().map(|i| i.evaluate()).collect() };
    let first_out = eval(&first);
    let second_out = eval(&second);

    let mut failures = Vec::new();
    for (offset, (list, outs)) in [(&first, &first_out), (&second, &second_out)].into_iter().enumerate() {
        for (i, (inst, out)) in list.iter().zip(outs).enumerate() {
            let index = offset * count + i;
            match out {
                Ok(o) if o.passed => {}
                Ok(o) => failures.push(FailedInstance {
                    index,
                    instance: inst.clone(),
                    outcome: Some(*o),
                    error: None,
                }),
                Err(e) => failures.push(FailedInstance {
                    index,
                    instance: inst.clone(),
                    outcome: None,
                    error: Some(e.to_string()),
                }),
            }
        }
    }
    let margin =
        |o: &Result<LemmaOutcome>, pick: fn(&LemmaOutcome) -> f64| o.as_ref().map(pick).unwrap_or(f64::INFINITY);
    Ok(LemmaSuiteReport {
        seed,
        count,
        lemma1: SuiteSummary::from_margins(first_out.iter().map(|o| margin(o, |o| o.upper_margin)), LEMMA1_TOL),
        lemma2_upper: SuiteSummary::from_margins(second_out.iter().map(|o| margin(o, |o| o.upper_margin)), LEMMA2_TOL),
        lemma2_lower: SuiteSummary::from_margins(
            second_out
                .iter()
                .map(|o| margin(o, |o| o.lower_margin.unwrap_or(f64::INFINITY))),
            LEMMA2_TOL,
        ),
        closed_form_max_rel_err: second_out
            .iter()
            .map(|o| margin(o, |o| o.closed_form_err.unwrap_or(f64::INFINITY)))
            .fold(0.0, f64::max),
        failures,
    })
}
