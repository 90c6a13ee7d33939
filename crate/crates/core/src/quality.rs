//! Layer quality `Q² = Σ G(λ̃)` under each R-transform model.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::free_prob::{CumulantSet, ORDER};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum QualityModel {
    #[serde(rename = "discrete")]
    Discrete,
    #[serde(rename = "fc")]
    FreeCauchy,
    #[serde(rename = "imp")]
    InverseMp,
    #[serde(rename = "lw")]
    LevyWigner,
    #[serde(rename = "cumulant")]
    CumulantSeries,
}

impl QualityModel {
    pub const ALL: [QualityModel; 5] = [
        QualityModel::Discrete,
        QualityModel::FreeCauchy,
        QualityModel::InverseMp,
        QualityModel::LevyWigner,
        QualityModel::CumulantSeries,
    ];

    pub fn id(self) -> &'static str {
        match self {
            QualityModel::Discrete => "discrete",
            QualityModel::FreeCauchy => "fc",
            QualityModel::InverseMp => "imp",
            QualityModel::LevyWigner => "lw",
            QualityModel::CumulantSeries => "cumulant",
        }
    }
}

impl std::str::FromStr for QualityModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QualityModel::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| Error::Domain(format!("unknown quality model `{s}`")))
    }
}

/// Argument of the cumulant series: `λ̃/M̃` as printed, or `λ̃` itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesScaling {
    #[default]
    PerTail,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport<T: Real> {
    pub model_id: QualityModel,
    pub q2: T,
    /// `log10 Q`; `None` when `q2 <= 0`.
    pub log_q: Option<T>,
    pub tail_size: usize,
    pub lambda_min_ecs: Option<T>,
    pub per_eigen_g: Vec<T>,
    /// Exponent the model was evaluated at, or implied by it (`2κ` for IMP).
    pub alpha: Option<T>,
    pub empty_tail: bool,
}

impl<T: Real> QualityReport<T> {
    fn from_terms(model_id: QualityModel, per_eigen_g: Vec<T>, tail_size: usize) -> Self {
        let q2: T = per_eigen_g.iter().copied().sum();
        QualityReport {
            model_id,
            q2,
            log_q: half_log10(q2),
            tail_size,
            lambda_min_ecs: None,
            per_eigen_g,
            alpha: None,
            empty_tail: tail_size == 0,
        }
    }
}

fn half_log10<T: Real>(q2: T) -> Option<T> {
    (q2 > T::zero()).then(|| T::lit(0.5) * q2.log10())
}

fn tail_max<T: Real>(tail: &[T]) -> Result<T> {
    let top = tail.iter().copied().fold(T::neg_infinity(), T::max);
    if !(top > T::zero()) {
        return Err(Error::Domain("quality needs a tail with a positive maximum".into()));
    }
    Ok(top)
}

/// Spike model `Q² = (Σ λ̃)²`, split per eigenvalue as `(Σ λ̃) λ̃ᵢ`.
pub fn q2_discrete<T: Real>(tail: &[T]) -> QualityReport<T> {
    let trace: T = tail.iter().copied().sum();
    let mut r =
        QualityReport::from_terms(QualityModel::Discrete, tail.iter().map(|&x| trace * x).collect(), tail.len());
    // exact square rather than the summed split
    r.q2 = trace * trace;
    r.log_q = (trace > T::zero()).then(|| trace.log10());
    r
}

/// Free-Cauchy estimate `log10 Q ≈ log10 λ_max` with shift `a = 1`.
pub fn q2_free_cauchy<T: Real>(tail: &[T], alpha: T) -> Result<QualityReport<T>> {
    let lmax = tail_max(tail)?;
    let mut r = QualityReport::from_terms(QualityModel::FreeCauchy, vec![lmax * lmax], tail.len());
    r.log_q = Some(lmax.log10());
    r.alpha = Some(alpha);
    Ok(r)
}

/// Inverse-MP `Q² = Σ κ (ln λ̃ᵢ − ln λ_min)`.
pub fn q2_imp<T: Real>(kappa: T, tail: &[T], lambda_min_ecs: T) -> Result<QualityReport<T>> {
    if !(kappa > T::zero()) {
        return Err(Error::Domain(format!("inverse-MP kappa must be positive, got {kappa}")));
    }
    if !(lambda_min_ecs > T::zero()) {
        return Err(Error::Domain(format!("ECS threshold must be positive, got {lambda_min_ecs}")));
    }
    let ln_min = lambda_min_ecs.ln();
    let mut terms = Vec::with_capacity(tail.len());
    for &x in tail {
        if !(x >= lambda_min_ecs) {
            return Err(Error::Domain(format!("tail eigenvalue {x} lies below the ECS threshold {lambda_min_ecs}")));
        }
        terms.push(kappa * (x.ln() - ln_min));
    }
    let mut r = QualityReport::from_terms(QualityModel::InverseMp, terms, tail.len());
    r.lambda_min_ecs = Some(lambda_min_ecs);
    r.alpha = Some(T::lit(2.0) * kappa);
    Ok(r)
}

/// Lévy-Wigner `log10 Q² ≈ (α − 1) log10 λ_max` for `α ∈ (1, 2]`.
pub fn q2_levy_wigner<T: Real>(alpha: T, lambda_max: T, tail_size: usize) -> Result<QualityReport<T>> {
    if !(alpha > T::one() && alpha <= T::lit(2.0)) {
        return Err(Error::Domain(format!("Levy-Wigner quality needs alpha in (1, 2], got {alpha}")));
    }
    if !(lambda_max > T::zero()) {
        return Err(Error::Domain(format!("lambda_max must be positive, got {lambda_max}")));
    }
    let log_q2 = (alpha - T::one()) * lambda_max.log10();
    let mut r = QualityReport::from_terms(QualityModel::LevyWigner, vec![T::lit(10.0).powf(log_q2)], tail_size);
    r.log_q = Some(T::lit(0.5) * log_q2);
    r.alpha = Some(alpha);
    Ok(r)
}

/// Term-wise integral of the cumulant series, `Σ_k (κ_k / k) x^k` with
/// `x = λ̃/M̃` (or `λ̃` under [`SeriesScaling::Raw`]), cumulants from the tail.
pub fn q2_cumulant_series<T: Real>(tail: &[T], m_tilde: usize, scaling: SeriesScaling) -> Result<QualityReport<T>> {
    let cumulants = CumulantSet::from_tail(tail)?;
    q2_cumulant_series_with(tail, m_tilde, &cumulants.kappa, scaling)
}

/// [`q2_cumulant_series`] with explicit cumulants.
pub fn q2_cumulant_series_with<T: Real>(
    tail: &[T],
    m_tilde: usize,
    kappa: &[T; ORDER],
    scaling: SeriesScaling,
) -> Result<QualityReport<T>> {
    if tail.is_empty() || m_tilde == 0 {
        return Err(Error::Domain("cumulant series needs a non-empty tail".into()));
    }
    let div = match scaling {
        SeriesScaling::PerTail => T::count(m_tilde),
        SeriesScaling::Raw => T::one(),
    };
    let terms = tail
        .iter()
        .map(|&lam| {
            let x = lam / div;
            let mut p = T::one();
            let mut g = T::zero();
            for (k, &kk) in kappa.iter().enumerate() {
                p *= x;
                g += kk * p / T::count(k + 1);
            }
            g
        })
        .collect();
    Ok(QualityReport::from_terms(QualityModel::CumulantSeries, terms, tail.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free_prob::{g_lambda_quadrature, RTransformModel};
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn sum(v: &[f64]) -> f64 {
        v.iter().sum()
    }

    #[test]
    fn model_ids_round_trip() {
        for m in QualityModel::ALL {
            assert_eq!(m.id().parse::<QualityModel>().unwrap(), m);
            assert_eq!(serde_json::to_value(m).unwrap(), m.id());
        }
        assert!("bogus".parse::<QualityModel>().is_err());
    }

    #[test]
    fn discrete_examples() {
        assert_eq!(q2_discrete(&[1.0, 1.0]).q2, 4.0);
        assert_eq!(q2_discrete(&[3.0]).q2, 9.0);
        let e = q2_discrete::<f64>(&[]);
        assert_eq!((e.q2, e.log_q, e.empty_tail), (0.0, None, true));
        let r = q2_discrete(&[0.5, 2.0, 7.5]);
        assert!((sum(&r.per_eigen_g) - r.q2).abs() < 1e-10);
        assert_eq!(r.log_q, Some(1.0));
    }

    #[test]
    fn free_cauchy_examples() {
        assert_eq!(q2_free_cauchy(&[3.0, 100.0], 2.5).unwrap().log_q, Some(2.0));
        assert_eq!(q2_free_cauchy(&[1.0], 2.0).unwrap().log_q, Some(0.0));
        let r = q2_free_cauchy(&[10.0, 1.0], 3.0).unwrap();
        assert_eq!((r.q2, r.alpha), (100.0, Some(3.0)));
        assert!(q2_free_cauchy::<f64>(&[], 2.0).is_err());
    }

    #[test]
    fn imp_examples() {
        let lm = 0.3;
        let r = q2_imp(0.5f64, &[E * lm, E * E * lm], lm).unwrap();
        assert!((r.q2 - 1.5).abs() < 1e-14);
        assert_eq!(r.alpha, Some(1.0));
        assert_eq!(q2_imp(0.5, &[lm], lm).unwrap().q2, 0.0);
        assert!(q2_imp(0.5, &[0.1], lm).is_err());
        assert!(q2_imp(0.0, &[1.0], lm).is_err());
    }

    #[test]
    fn imp_terms_match_quadrature() {
        for kappa in [0.25f64, 0.5, 1.0] {
            let lm = 0.7;
            let tail = [1.1 * lm, 3.0 * lm, 10.0 * lm];
            let r = q2_imp(kappa, &tail, lm).unwrap();
            let model = RTransformModel::InverseMp { kappa };
            for (&x, &g) in tail.iter().zip(&r.per_eigen_g) {
                let q = g_lambda_quadrature(&model, x, lm, 1e-11).unwrap();
                assert!((g - q).abs() < 1e-8, "κ={kappa} λ={x}: {g} vs {q}");
            }
        }
    }

    #[test]
    fn levy_wigner_examples() {
        let a = q2_levy_wigner(2.0f64, 10.0, 3).unwrap();
        assert!((a.q2.log10() - 1.0).abs() < 1e-14);
        let b = q2_levy_wigner(1.5f64, 100.0, 3).unwrap();
        assert!((b.q2.log10() - 1.0).abs() < 1e-14);
        assert_eq!(b.log_q, Some(0.5));
        assert!(q2_levy_wigner(1.0, 10.0, 3).is_err());
        assert!(q2_levy_wigner(2.5, 10.0, 3).is_err());
        let eps = 1e-6;
        let c = q2_levy_wigner(1.0f64 + eps, 10.0, 3).unwrap();
        assert!((c.q2.log10() - eps).abs() < 1e-15);
    }

    #[test]
    fn cumulant_series_examples() {
        let a = q2_cumulant_series(&[1.0f64], 1, SeriesScaling::PerTail).unwrap();
        assert!((a.q2 - 1.0).abs() < 1e-15);
        let b = q2_cumulant_series(&[2.0f64, 2.0], 2, SeriesScaling::PerTail).unwrap();
        assert!((b.q2 - 4.0).abs() < 1e-14);
        // raw argument: κ1 = 2, other cumulants vanish, so each term is 2·2
        let c = q2_cumulant_series(&[2.0f64, 2.0], 2, SeriesScaling::Raw).unwrap();
        assert!((c.q2 - 8.0).abs() < 1e-13);
        assert!(q2_cumulant_series::<f64>(&[], 1, SeriesScaling::PerTail).is_err());
    }

    proptest! {
        #[test]
        fn adding_an_eigenvalue_never_lowers_q2(
            tail in proptest::collection::vec(1.0f64..50.0, 1..30),
            extra in 1.0f64..50.0,
        ) {
            let mut more = tail.clone();
            more.push(extra);
            prop_assert!(q2_discrete(&more).q2 >= q2_discrete(&tail).q2);
            let lm = 1.0;
            prop_assert!(q2_imp(0.5, &more, lm).unwrap().q2 >= q2_imp(0.5, &tail, lm).unwrap().q2);
        }

        #[test]
        fn imp_scale_free(tail in proptest::collection::vec(1.0f64..50.0, 1..30), c in 1e-3f64..1e3, kappa in 0.1f64..2.0) {
            let scaled: Vec<f64> = tail.iter().map(|x| x * c).collect();
            let a = q2_imp(kappa, &tail, 1.0).unwrap().q2;
            let b = q2_imp(kappa, &scaled, c).unwrap().q2;
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }

        #[test]
        fn first_cumulant_only(tail in proptest::collection::vec(0.01f64..20.0, 1..30), k1 in -5.0f64..5.0) {
            let m = tail.len();
            let r = q2_cumulant_series_with(&tail, m, &[k1, 0.0, 0.0, 0.0, 0.0], SeriesScaling::PerTail).unwrap();
            let want = k1 * sum(&tail) / m as f64;
            prop_assert!((r.q2 - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }

        #[test]
        fn q2_is_sum_of_terms(tail in proptest::collection::vec(0.01f64..20.0, 1..30)) {
            let m = tail.len();
            for r in [
                q2_discrete(&tail),
                q2_cumulant_series(&tail, m, SeriesScaling::PerTail).unwrap(),
                q2_imp(0.5, &tail, 0.01).unwrap(),
            ] {
                prop_assert!((sum(&r.per_eigen_g) - r.q2).abs() <= 1e-10 * (1.0 + r.q2.abs()));
            }
        }

        #[test]
        fn log_q_increases_with_lambda_max(l in 1e-3f64..1e3, f in 1.001f64..10.0, alpha in 1.01f64..2.0) {
            prop_assert!(q2_free_cauchy(&[l * f], alpha).unwrap().log_q > q2_free_cauchy(&[l], alpha).unwrap().log_q);
            prop_assert!(q2_levy_wigner(alpha, l * f, 1).unwrap().log_q > q2_levy_wigner(alpha, l, 1).unwrap().log_q);
        }
    }
}
