//! Dormand–Prince 5(4) with PI step-size control.
//!
//! Steps are clipped so that every requested output time is hit exactly; no
//! interpolation is performed.

use crate::error::{Error, Result};

/// A first-order system `y' = f(t, y)`.
///
/// The first `controlled()` components take part in the error norm; the
/// remaining ones are pure quadratures driven by the state (running integrals)
/// and follow the step sizes chosen for the state.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn controlled(&self) -> usize {
        self.dim()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SolverStats {
    pub steps: u64,
    pub rejected: u64,
    pub rhs_evals: u64,
}

/// Why [`solve`] returned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Finish<R> {
    ReachedEnd,
    /// The step observer asked to stop at `t`.
    Stopped(R, f64),
    StepLimit(f64),
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
// error coefficients: fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

struct Work {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
}

impl Work {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y_new: vec![0.0; n],
        }
    }
}

fn error_norm(y: &[f64], y_new: &[f64], err: &[f64], ctrl: usize, tol: Tolerances) -> f64 {
    if ctrl == 0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..ctrl {
        let sk = tol.abs + tol.rel * y[i].abs().max(y_new[i].abs());
        let r = err[i] / sk;
        acc += r * r;
    }
    (acc / ctrl as f64).sqrt()
}

fn initial_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    f0: &[f64],
    tol: Tolerances,
    work: &mut Work,
    stats: &mut SolverStats,
) -> Result<f64> {
    let ctrl = sys.controlled();
    let n = ctrl.max(1) as f64;
    let (mut d0, mut d1) = (0.0, 0.0);
    for i in 0..ctrl {
        let sk = tol.abs + tol.rel * y[i].abs();
        d0 += (y[i] / sk).powi(2);
        d1 += (f0[i] / sk).powi(2);
    }
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    let h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
    for i in 0..y.len() {
        work.tmp[i] = y[i] + h0 * f0[i];
    }
    let f1 = &mut work.k[1];
    sys.rhs(t + h0, &work.tmp, f1)?;
    stats.rhs_evals += 1;
    let mut d2 = 0.0;
    for i in 0..ctrl {
        let sk = tol.abs + tol.rel * y[i].abs();
        d2 += ((f1[i] - f0[i]) / sk).powi(2);
    }
    let d2 = (d2 / n).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1))
}

/// Integrates `sys` from `(t0, y0)` through every time in `outputs`.
///
/// `outputs` must be strictly increasing and start at or after `t0`; when the
/// first output equals `t0` the initial state is reported as a sample.
/// `observer(t, y, f)` runs after each accepted step (with `f = f(t, y)`) and
/// may stop the integration; `on_sample` receives each output.
pub fn solve<S: OdeSystem + ?Sized, R>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    outputs: &[f64],
    tol: Tolerances,
    max_steps: u64,
    mut observer: impl FnMut(f64, &[f64], &[f64]) -> Option<R>,
    mut on_sample: impl FnMut(f64, &[f64], &[f64]),
) -> Result<(Finish<R>, SolverStats)> {
    let n = sys.dim();
    if y0.len() != n {
        return Err(Error::Usage(format!(
            "initial state has {} components, system has {n}",
            y0.len()
        )));
    }
    if !(tol.rel > 0.0 && tol.abs > 0.0) {
        return Err(Error::Usage("tolerances must be positive".into()));
    }
    if outputs.windows(2).any(|w| !(w[1] > w[0])) || outputs.first().is_some_and(|&t| t < t0) {
        return Err(Error::Usage(
            "output times must be strictly increasing and not before t0".into(),
        ));
    }
    let ctrl = sys.controlled();
    let mut stats = SolverStats::default();
    let mut work = Work::new(n);
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut f = vec![0.0; n];
    sys.rhs(t, &y, &mut f)?;
    stats.rhs_evals += 1;

    let mut next_out = 0;
    if outputs.first() == Some(&t0) {
        on_sample(t0, &y, &f);
        next_out = 1;
    }
    if next_out == outputs.len() {
        return Ok((Finish::ReachedEnd, stats));
    }

    let mut h = initial_step(sys, t, &y, &f, tol, &mut work, &mut stats)?;
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;

    loop {
        if stats.steps >= max_steps {
            return Ok((Finish::StepLimit(t), stats));
        }
        let target = outputs[next_out];
        let remaining = target - t;
        // stretch steps that would stop just short of an output
        let clipped = h >= remaining * (1.0 - 1e-9);
        let step = if clipped { remaining } else { h };
        if !(step > 0.0) || step < 1e-15 * t.abs().max(1e-300) {
            return Err(Error::Numeric(format!("step size underflow at t = {t} (h = {step})")));
        }

        stage(sys, t, &y, &f, step, &mut work, &mut stats)?;

        let Work { k, tmp, y_new } = &mut work;
        for i in 0..n {
            tmp[i] = step * (E1 * f[i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
        }
        let err = error_norm(&y, y_new, tmp, ctrl, tol);

        if err.is_finite() && err <= 1.0 {
            let fac11 = err.powf(EXPO);
            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (1.0 / FAC_MAX).max((1.0 / FAC_MIN).min(fac / SAFETY));
            let mut h_new = step / fac;
            fac_old = err.max(1e-4);
            if last_rejected {
                h_new = h_new.min(step);
            }
            last_rejected = false;
            stats.steps += 1;

            t = if clipped { target } else { t + step };
            std::mem::swap(&mut y, y_new);
            std::mem::swap(&mut f, &mut k[6]);

            if clipped {
                on_sample(t, &y, &f);
                next_out += 1;
                // a clipped step says little about the admissible length
                h = h.max(h_new);
            } else {
                h = h_new;
            }
            if let Some(reason) = observer(t, &y, &f) {
                return Ok((Finish::Stopped(reason, t), stats));
            }
            if next_out == outputs.len() {
                return Ok((Finish::ReachedEnd, stats));
            }
        } else {
            stats.rejected += 1;
            let shrink = if err.is_finite() {
                (1.0 / FAC_MIN).min(err.powf(EXPO) / SAFETY)
            } else {
                1.0 / FAC_MIN
            };
            h = step / shrink;
            last_rejected = true;
        }
    }
}

fn stage<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    f: &[f64],
    h: f64,
    work: &mut Work,
    stats: &mut SolverStats,
) -> Result<()> {
    let n = y.len();
    let Work { k, tmp, y_new } = work;
    for i in 0..n {
        tmp[i] = y[i] + h * A21 * f[i];
    }
    sys.rhs(t + C2 * h, tmp, &mut k[1])?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A31 * f[i] + A32 * k[1][i]);
    }
    sys.rhs(t + C3 * h, tmp, &mut k[2])?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A41 * f[i] + A42 * k[1][i] + A43 * k[2][i]);
    }
    sys.rhs(t + C4 * h, tmp, &mut k[3])?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A51 * f[i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
    }
    sys.rhs(t + C5 * h, tmp, &mut k[4])?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A61 * f[i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i] + A65 * k[4][i]);
    }
    sys.rhs(t + h, tmp, &mut k[5])?;
    for i in 0..n {
        y_new[i] = y[i] + h * (A71 * f[i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
    }
    sys.rhs(t + h, y_new, &mut k[6])?;
    stats.rhs_evals += 6;
    Ok(())
}
