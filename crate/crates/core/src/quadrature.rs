//! Adaptive Gauss-Kronrod (7/15 point) integration.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default absolute tolerance.
pub const DEFAULT_ABS_TOL: f64 = 1e-10;

const MAX_INTERVALS: usize = 20_000;

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
// Gauss weights for the odd Kronrod nodes 1, 3, 5 and the centre.
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// `(kronrod, |kronrod - gauss|)` on `[a, b]`.
fn gk15<T: Real>(f: &impl Fn(T) -> T, a: T, b: T) -> Result<(T, T)> {
    let half = (b - a) * T::lit(0.5);
    let centre = (a + b) * T::lit(0.5);
    let fc = f(centre);
    let mut kronrod = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for (j, (&x, &wk)) in XGK.iter().zip(&WGK).take(7).enumerate() {
        let dx = half * T::lit(x);
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += pair * T::lit(wk);
        if j % 2 == 1 {
            gauss += pair * T::lit(WG[j / 2]);
        }
    }
    let (k, g) = (kronrod * half, gauss * half);
    if !k.is_finite() {
        return Err(Error::Numeric("integrand is not finite on the interval".into()));
    }
    Ok((k, (k - g).abs()))
}

/// `∫_a^b f` to within `abs_tol`, bisecting the interval with the largest
/// error estimate until the summed estimate meets the tolerance.
pub fn integrate<T: Real>(f: impl Fn(T) -> T, a: T, b: T, abs_tol: T) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    if b < a {
        return integrate(f, b, a, abs_tol).map(|v| -v);
    }
    let (v, e) = gk15(&f, a, b)?;
    let mut parts = vec![(a, b, v, e)];
    loop {
        let total_err: T = parts.iter().map(|p| p.3).sum();
        if total_err <= abs_tol {
            return Ok(parts.iter().map(|p| p.2).sum());
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::Numeric(format!("quadrature did not reach tolerance {abs_tol} (estimate {total_err})")));
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).expect("finite error"))
            .map(|(i, _)| i)
            .expect("non-empty");
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = (lo + hi) * T::lit(0.5);
        if !(mid > lo && mid < hi) {
            return Err(Error::Numeric("quadrature interval underflow".into()));
        }
        let (v1, e1) = gk15(&f, lo, mid)?;
        let (v2, e2) = gk15(&f, mid, hi)?;
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// [`integrate`] over consecutive pieces split at the given interior points.
pub fn integrate_with_breaks<T: Real>(f: impl Fn(T) -> T, a: T, b: T, breaks: &[T], abs_tol: T) -> Result<T> {
    let mut knots = vec![a];
    knots.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    knots.push(b);
    knots.sort_by(|x, y| x.partial_cmp(y).expect("finite knots"));
    let pieces = T::count(knots.len() - 1);
    let mut total = T::zero();
    for w in knots.windows(2) {
        total += integrate(&f, w[0], w[1], abs_tol / pieces)?;
    }
    Ok(total)
}
