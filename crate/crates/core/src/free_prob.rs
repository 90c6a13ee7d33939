//! Spectral moments, free cumulants, Green's functions and R-transforms of
//! the heavy-tail model families, plus their integrals `G(λ)`.

use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature;
use crate::scalar::Real;

/// Number of moments and cumulants tracked.
pub const ORDER: usize = 5;

/// Moments `m_k = (1/M̃) Σ λ̃^k` and free cumulants of one tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CumulantSet<T: Real> {
    pub m: [T; ORDER],
    pub kappa: [T; ORDER],
    pub m_tilde: usize,
}

impl<T: Real> CumulantSet<T> {
    pub fn from_tail(tail: &[T]) -> Result<Self> {
        let moments = normalized_moments(tail, ORDER)?;
        let mut m = [T::zero(); ORDER];
        m.copy_from_slice(&moments);
        Ok(CumulantSet { m, kappa: free_cumulants(&m), m_tilde: tail.len() })
    }
}

/// Normalized-trace moments `m_k = (1/M̃) Σ λ̃^k` for `k = 1..=upto`, uncentred.
pub fn normalized_moments<T: Real>(tail: &[T], upto: usize) -> Result<Vec<T>> {
    if tail.is_empty() {
        return Err(Error::Domain("moments need a non-empty tail".into()));
    }
    if upto == 0 || upto > ORDER {
        return Err(Error::Domain(format!("moment order must be in 1..={ORDER}, got {upto}")));
    }
    let n = T::count(tail.len());
    let mut sums = vec![T::zero(); upto];
    for &x in tail {
        let mut p = T::one();
        for s in sums.iter_mut() {
            p *= x;
            *s += p;
        }
    }
    Ok(sums.into_iter().map(|s| s / n).collect())
}

/// First five free cumulants from the first five moments.
pub fn free_cumulants<T: Real>(m: &[T; ORDER]) -> [T; ORDER] {
    let [m1, m2, m3, m4, m5] = *m;
    let c = |x: f64| T::lit(x);
    let k1 = m1;
    let k2 = m2 - m1 * m1;
    let k3 = m3 - c(3.0) * m2 * m1 + c(2.0) * m1.powi(3);
    let k4 = m4 - c(4.0) * m3 * m1 - c(2.0) * m2 * m2 + c(10.0) * m2 * m1 * m1 - c(5.0) * m1.powi(4);
    let k5 = m5 - c(5.0) * m4 * m1 + c(15.0) * m3 * m1 * m1 + c(15.0) * m2 * m2 * m1
        - c(35.0) * m2 * m1.powi(3)
        - c(5.0) * m3 * m2
        + c(14.0) * m1.powi(5);
    [k1, k2, k3, k4, k5]
}

/// Green's function `G(z) = (1/M) Σ 1/(z − λ)` for real `z` off the support.
pub fn greens_function<T: Real>(eigenvalues: &[T], z: T) -> Result<T> {
    if eigenvalues.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    let lo = eigenvalues.iter().copied().fold(T::infinity(), T::min);
    let hi = eigenvalues.iter().copied().fold(T::neg_infinity(), T::max);
    if z >= lo && z <= hi {
        return Err(Error::Support(z.to_f64_lossy()));
    }
    let sum: T = eigenvalues.iter().map(|&l| T::one() / (z - l)).sum();
    Ok(sum / T::count(eigenvalues.len()))
}

fn check_pl_order(alpha: u32) -> Result<()> {
    if !(2..=4).contains(&alpha) {
        return Err(Error::Domain(format!("closed forms exist for alpha in {{2, 3, 4}}, got {alpha}")));
    }
    Ok(())
}

/// Green's function of the untruncated power law `ρ(λ) = (α−1) λ0^(α−1) λ^(−α)`
/// on `[λ0, ∞)` for `α ∈ {2, 3, 4}`.
pub fn bare_pl_greens<T: Real>(alpha: u32, lambda0: T, z: Complex<T>) -> Result<Complex<T>> {
    check_pl_order(alpha)?;
    if !(lambda0 > T::zero()) {
        return Err(Error::Domain(format!("lambda0 must be positive, got {lambda0}")));
    }
    if z.im == T::zero() && z.re >= lambda0 {
        return Err(Error::Support(z.re.to_f64_lossy()));
    }
    if z.re == T::zero() && z.im == T::zero() {
        return Err(Error::Domain("bare power-law Green's function is singular at z = 0".into()));
    }
    let one = Complex::new(T::one(), T::zero());
    let log = (one - z / lambda0).ln();
    let l0 = Complex::new(lambda0, T::zero());
    let c = |x: f64| Complex::new(T::lit(x), T::zero());
    let inv = one / z;
    Ok(match alpha {
        2 => inv + l0 * log * inv * inv,
        3 => inv + c(2.0) * l0 * inv * inv + c(2.0) * l0 * l0 * log * inv.powi(3),
        _ => inv + c(1.5) * l0 * inv * inv + c(3.0) * l0 * l0 * inv.powi(3) + c(3.0) * l0.powi(3) * log * inv.powi(4),
    })
}

/// `(κ1, κ2)` of the power law `λ^(−α)` truncated to `[λ0, λmax]`.
pub fn truncated_pl_cumulants<T: Real>(alpha: u32, lambda0: T, lambda_max: T) -> Result<(T, T)> {
    check_pl_order(alpha)?;
    if !(lambda0 > T::zero()) || !(lambda_max > lambda0) {
        return Err(Error::Domain(format!(
            "truncated power law needs lambda_max > lambda0 > 0, got ({lambda0}, {lambda_max})"
        )));
    }
    let (l0, lm) = (lambda0, lambda_max);
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let (k1, m2) = match alpha {
        2 => {
            let c2 = l0 * lm / (lm - l0);
            (c2 * (lm / l0).ln(), c2 * (lm - l0))
        }
        3 => {
            let c3 = two * l0 * l0 * lm * lm / (lm * lm - l0 * l0);
            (two * lm * l0 / (lm + l0), c3 * (lm / l0).ln())
        }
        _ => {
            let cube = lm.powi(3) - l0.powi(3);
            let c4 = three * l0.powi(3) * lm.powi(3) / cube;
            let k1 = three * lm * l0 * (lm * lm - l0 * l0) / (two * cube);
            (k1, c4 * (T::one() / l0 - T::one() / lm))
        }
    };
    Ok((k1, m2 - k1 * k1))
}

/// R-transform model families.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum RTransformModel<T: Real> {
    /// Constant `R = Σ λ̃` over the tail.
    Discrete {
        trace: T,
    },
    FreeCauchy {
        a: T,
        gamma: T,
    },
    InverseMp {
        kappa: T,
    },
    /// `R = b z^(α−2)` with the HTSR exponent `α ∈ (0, 2)`.
    LevyWigner {
        alpha: T,
        b: T,
    },
    /// Two-term cumulant truncation `κ1 + κ2 z` of a truncated power law.
    TruncatedPl {
        alpha: u32,
        lambda0: T,
        lambda_max: T,
    },
    CumulantSeries {
        kappa: [T; ORDER],
    },
}

impl<T: Real> RTransformModel<T> {
    pub fn discrete(tail: &[T]) -> Self {
        RTransformModel::Discrete { trace: tail.iter().copied().sum() }
    }

    /// Lévy-Wigner with `b = α_l = α − 1`, which makes `G(λ) = λ^(α−1)` up
    /// to the lower-limit constant.
    pub fn levy_wigner(alpha: T) -> Self {
        RTransformModel::LevyWigner { alpha, b: alpha - T::one() }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RTransformModel::InverseMp { kappa } if !(kappa > T::zero()) => {
                Err(Error::Domain(format!("inverse-MP kappa must be positive, got {kappa}")))
            }
            RTransformModel::LevyWigner { alpha, .. } if !(alpha > T::zero() && alpha < T::lit(2.0)) => {
                Err(Error::Domain(format!("Levy-Wigner alpha must lie in (0, 2), got {alpha}")))
            }
            RTransformModel::TruncatedPl { alpha, lambda0, lambda_max } => {
                truncated_pl_cumulants(alpha, lambda0, lambda_max).map(|_| ())
            }
            _ => Ok(()),
        }
    }

    /// Real points where `Re R` is not smooth.
    fn kinks(&self) -> Vec<T> {
        match *self {
            RTransformModel::InverseMp { kappa } => vec![kappa / T::lit(2.0)],
            _ => Vec::new(),
        }
    }
}

/// Evaluates `R(z)`. The inverse-MP square root uses the principal branch, so
/// for real `z > κ/2` the value is complex with real part `κ/z`.
pub fn r_transform<T: Real>(model: &RTransformModel<T>, z: Complex<T>) -> Result<Complex<T>> {
    model.validate()?;
    let re = |x: T| Complex::new(x, T::zero());
    Ok(match *model {
        RTransformModel::Discrete { trace } => re(trace),
        RTransformModel::FreeCauchy { a, gamma } => Complex::new(a, gamma),
        RTransformModel::InverseMp { kappa } => {
            if z.norm() <= T::lit(1e-6) * kappa {
                // series 1 + z/(2κ) + z²/(2κ²) + 5z³/(8κ³) avoids cancellation
                let w = z / kappa;
                re(T::one()) + w / T::lit(2.0) + w * w / T::lit(2.0) + w.powi(3) * T::lit(0.625)
            } else {
                let root = (re(kappa) * (re(kappa) - z * T::lit(2.0))).sqrt();
                (re(kappa) - root) / z
            }
        }
        RTransformModel::LevyWigner { alpha, b } => {
            if z.norm() == T::zero() {
                return Err(Error::Domain("Levy-Wigner R-transform is singular at z = 0".into()));
            }
            z.powc(re(alpha - T::lit(2.0))) * b
        }
        RTransformModel::TruncatedPl { alpha, lambda0, lambda_max } => {
            let (k1, k2) = truncated_pl_cumulants(alpha, lambda0, lambda_max)?;
            re(k1) + z * k2
        }
        RTransformModel::CumulantSeries { kappa } => {
            let mut acc = re(T::zero());
            for &k in kappa.iter().rev() {
                acc = acc * z + re(k);
            }
            acc
        }
    })
}

/// Antiderivative of `Re R` on the positive axis, up to a constant.
fn antiderivative<T: Real>(model: &RTransformModel<T>, x: T) -> Result<T> {
    let two = T::lit(2.0);
    Ok(match *model {
        RTransformModel::Discrete { trace } => trace * x,
        RTransformModel::FreeCauchy { a, .. } => a * x,
        RTransformModel::InverseMp { kappa } => {
            let cut = kappa / two;
            // s = sqrt(κ(κ − 2z)) turns (κ − s)/z into 2κ/(κ + s), giving
            // 2κ ln(κ + s) − 2s below the cut and κ ln z above it
            let below = |z: T| {
                let s = (kappa * (kappa - two * z)).max(T::zero()).sqrt();
                two * kappa * (kappa + s).ln() - two * s
            };
            if x <= cut {
                below(x)
            } else {
                below(cut) + kappa * (x.ln() - cut.ln())
            }
        }
        RTransformModel::LevyWigner { alpha, b } => {
            let p = alpha - T::one();
            if p == T::zero() {
                b * x.ln()
            } else {
                b * x.powf(p) / p
            }
        }
        RTransformModel::TruncatedPl { alpha, lambda0, lambda_max } => {
            let (k1, k2) = truncated_pl_cumulants(alpha, lambda0, lambda_max)?;
            k1 * x + k2 * x * x / two
        }
        RTransformModel::CumulantSeries { kappa } => {
            let mut acc = T::zero();
            let mut p = T::one();
            for (k, &c) in kappa.iter().enumerate() {
                p *= x;
                acc += c * p / T::count(k + 1);
            }
            acc
        }
    })
}

fn check_interval<T: Real>(lambda: T, lambda_min: T) -> Result<()> {
    if !(lambda_min >= T::zero()) || !(lambda >= lambda_min) {
        return Err(Error::Domain(format!("G(λ) needs λ >= λ_min >= 0, got λ={lambda}, λ_min={lambda_min}")));
    }
    Ok(())
}

/// `G(λ) = ∫_{λ_min}^{λ} Re R(z) dz` from the closed-form antiderivatives.
pub fn g_lambda<T: Real>(model: &RTransformModel<T>, lambda: T, lambda_min_ecs: T) -> Result<T> {
    model.validate()?;
    check_interval(lambda, lambda_min_ecs)?;
    if lambda == lambda_min_ecs {
        return Ok(T::zero());
    }
    if let RTransformModel::LevyWigner { alpha, .. } = *model {
        if lambda_min_ecs == T::zero() && alpha <= T::one() {
            return Err(Error::Domain(format!("Levy-Wigner G(λ) diverges at λ_min = 0 for alpha = {alpha} <= 1")));
        }
    }
    let v = antiderivative(model, lambda)? - antiderivative(model, lambda_min_ecs)?;
    if !v.is_finite() {
        return Err(Error::Numeric("G(λ) is not finite".into()));
    }
    Ok(v)
}

/// `G(λ)` by adaptive quadrature of `Re R`, split at the model's kinks.
pub fn g_lambda_quadrature<T: Real>(model: &RTransformModel<T>, lambda: T, lambda_min_ecs: T, abs_tol: T) -> Result<T> {
    model.validate()?;
    check_interval(lambda, lambda_min_ecs)?;
    let f = |z: T| match r_transform(model, Complex::new(z, T::zero())) {
        Ok(r) => r.re,
        Err(_) => T::nan(),
    };
    quadrature::integrate_with_breaks(f, lambda_min_ecs, lambda, &model.kinks(), abs_tol)
}
