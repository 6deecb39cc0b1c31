//! Adaptive Gauss–Kronrod (7/15) quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 48;

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Kronrod estimate, error estimate, and Kronrod estimate of `∫|f|`.
fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    let mut l1 = WGK[7] * fc.abs();
    for i in 0..7 {
        let dx = h * XGK[i];
        let (lo, hi) = (f(c - dx), f(c + dx));
        let s = lo + hi;
        k += WGK[i] * s;
        l1 += WGK[i] * (lo.abs() + hi.abs());
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs(), (l1 * h).abs())
}

/// `∫_a^b f` to relative tolerance `rel_tol`.
///
/// The tolerance is taken relative to an estimate of `∫|f|`, so integrals that
/// cancel to nearly zero still converge. Subintervals are bisected until each
/// local error estimate meets its share of the tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let (whole, err, l1) = kronrod(&f, a, b);
    let tol = (rel_tol * l1.max(whole.abs())).max(1e-300);
    let mut evaluations = 15;
    if err <= tol {
        return Ok(Quadrature {
            value: whole,
            error: err,
            evaluations,
        });
    }
    let mut stack = vec![(a, b, 0u32)];
    let mut value = 0.0;
    let mut error = 0.0;
    let width = (b - a).abs();
    while let Some((lo, hi, depth)) = stack.pop() {
        let (q, e, _) = kronrod(&f, lo, hi);
        evaluations += 15;
        let share = tol * (hi - lo).abs() / width;
        if e <= share || depth >= MAX_DEPTH {
            if depth >= MAX_DEPTH && e > share {
                return Err(Error::Numeric(format!(
                    "quadrature on [{a}, {b}] did not converge near [{lo}, {hi}]"
                )));
            }
            value += q;
            error += e;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    if !value.is_finite() {
        return Err(Error::Numeric(format!("quadrature on [{a}, {b}] produced {value}")));
    }
    Ok(Quadrature {
        value,
        error,
        evaluations,
    })
}
