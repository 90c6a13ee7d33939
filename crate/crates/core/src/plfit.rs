//! Power-law tail fits of an ESD (continuous MLE with KS-selected `xmin`) and
//! the heavy-tail universality classes.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rmt;
use crate::scalar::Real;
use crate::spectral::Spectrum;
use crate::tensor_io::Normalization;

/// Fewest strictly positive eigenvalues a fit will accept.
pub const MIN_FIT_EIGENVALUES: usize = 8;

/// Smallest tail a candidate `xmin` may leave.
pub const MIN_TAIL: usize = 3;

/// Fits with a KS distance above this are flagged as poor.
pub const GOOD_FIT_MAX_KS: f64 = 0.09;

/// Share of numerically zero eigenvalues beyond which a wide layer counts
/// as rank collapsed.
pub const RANK_COLLAPSE_ZERO_FRACTION: f64 = 0.1;

/// One evaluated `xmin` candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint<T: Real> {
    pub xmin: T,
    pub alpha: T,
    pub d_ks: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerLawFit<T: Real> {
    pub alpha: T,
    pub xmin: T,
    pub xmax: T,
    pub d_ks: T,
    pub tail_count: usize,
    /// Normalization of the fitted spectrum.
    pub normalization: Normalization,
    /// Every candidate in ascending `xmin` order. Exported separately as
    /// plot data, so it stays out of the JSON form.
    #[serde(skip)]
    pub scan: Vec<ScanPoint<T>>,
}

impl<T: Real> PowerLawFit<T> {
    pub fn is_good(&self) -> bool {
        self.d_ks <= T::lit(GOOD_FIT_MAX_KS)
    }
}

/// Continuous maximum-likelihood exponent `1 + n / Σ ln(x / xmin)`.
pub fn mle_alpha<T: Real>(tail: &[T], xmin: T) -> Result<T> {
    if tail.is_empty() {
        return Err(Error::Domain("mle_alpha needs a non-empty tail".into()));
    }
    if !(xmin > T::zero()) {
        return Err(Error::Domain(format!("xmin must be positive, got {xmin}")));
    }
    let mut log_sum = T::zero();
    for &x in tail {
        if x < xmin {
            return Err(Error::Domain(format!("tail value {x} below xmin {xmin}")));
        }
        log_sum += (x / xmin).ln();
    }
    if log_sum == T::zero() {
        return Err(Error::InfiniteAlpha);
    }
    Ok(T::one() + T::count(tail.len()) / log_sum)
}

/// KS distance between the sorted `tail` and the power-law CDF
/// `1 - (x / xmin)^(1 - alpha)`.
pub fn ks_distance<T: Real>(tail: &[T], alpha: T, xmin: T) -> Result<T> {
    if !(alpha > T::one()) {
        return Err(Error::Domain(format!("KS distance needs alpha > 1, got {alpha}")));
    }
    if tail.is_empty() {
        return Err(Error::Domain("KS distance needs a non-empty tail".into()));
    }
    let n = T::count(tail.len());
    let expo = T::one() - alpha;
    let mut d = T::zero();
    for (i, &x) in tail.iter().enumerate() {
        let f = T::one() - (x / xmin).powf(expo);
        let hi = (T::count(i + 1) / n - f).abs();
        let lo = (T::count(i) / n - f).abs();
        d = d.max(hi).max(lo);
    }
    Ok(d)
}

/// Joint `(alpha, xmin)` fit requiring [`MIN_FIT_EIGENVALUES`] positive eigenvalues.
pub fn fit_pl<T: Real>(s: &Spectrum<T>) -> Result<PowerLawFit<T>> {
    fit_pl_with(s, MIN_FIT_EIGENVALUES)
}

/// Joint `(alpha, xmin)` fit: every distinct positive eigenvalue except the
/// top two is tried as `xmin` and the one with the smallest KS distance wins,
/// ties going to the larger `xmin`.
pub fn fit_pl_with<T: Real>(s: &Spectrum<T>, min_evals: usize) -> Result<PowerLawFit<T>> {
    let pos = s.positive();
    let required = min_evals.max(MIN_TAIL);
    if pos.len() < required {
        return Err(Error::TooFewEigenvalues { found: pos.len(), required });
    }
    let xmax = pos[pos.len() - 1];
    if pos[0] == xmax {
        return Err(Error::DegenerateSpectrum("all positive eigenvalues are equal".into()));
    }

    // start index of each distinct value, ascending
    let mut starts: Vec<usize> = (0..pos.len()).filter(|&i| i == 0 || pos[i] != pos[i - 1]).collect();
    starts.truncate(starts.len().saturating_sub(2));
    starts.retain(|&i| pos.len() - i >= MIN_TAIL);

    let scan: Vec<(usize, ScanPoint<T>)> = starts
        .par_iter()
        .filter_map(|&i| {
            let tail = &pos[i..];
            let xmin = pos[i];
            let alpha = mle_alpha(tail, xmin).ok()?;
            let d_ks = ks_distance(tail, alpha, xmin).ok()?;
            Some((i, ScanPoint { xmin, alpha, d_ks }))
        })
        .collect();

    let mut best: Option<&(usize, ScanPoint<T>)> = None;
    for cand in &scan {
        if best.is_none_or(|b| cand.1.d_ks <= b.1.d_ks) {
            best = Some(cand);
        }
    }
    let &(start, point) = best.ok_or_else(|| Error::DegenerateSpectrum("no admissible xmin candidate".into()))?;
    Ok(PowerLawFit {
        alpha: point.alpha,
        xmin: point.xmin,
        xmax,
        d_ks: point.d_ks,
        tail_count: pos.len() - start,
        normalization: s.normalization,
        scan: scan.into_iter().map(|(_, p)| p).collect(),
    })
}

/// Heavy-tail universality classes of a layer ESD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum UniversalityClass {
    RandomLike,
    BulkPlusSpikes,
    WeaklyHeavyTailed,
    FatTailed,
    VeryHeavyTailed,
    RankCollapse,
}

impl UniversalityClass {
    /// Class implied by a fitted exponent alone.
    pub fn from_alpha<T: Real>(alpha: T) -> Self {
        if alpha > T::lit(6.0) {
            UniversalityClass::WeaklyHeavyTailed
        } else if alpha > T::lit(2.0) {
            UniversalityClass::FatTailed
        } else {
            UniversalityClass::VeryHeavyTailed
        }
    }
}

/// True when a wide layer (`Q > 1`) has more than 10% zero eigenvalues.
pub fn is_rank_collapsed<T: Real>(s: &Spectrum<T>) -> bool {
    s.q > T::one() && T::count(s.zero_count()) > T::lit(RANK_COLLAPSE_ZERO_FRACTION) * T::count(s.len())
}

/// Rank collapse first, then the fitted exponent when the fit is trusted,
/// otherwise the MP edge test decides between a pure bulk and bulk plus spikes.
pub fn classify<T: Real>(alpha: T, fit_ok: bool, spectrum: &Spectrum<T>) -> UniversalityClass {
    if is_rank_collapsed(spectrum) {
        return UniversalityClass::RankCollapse;
    }
    if fit_ok {
        return UniversalityClass::from_alpha(alpha);
    }
    match rmt::mp_outliers(spectrum) {
        Ok(out) if !out.is_empty() => UniversalityClass::BulkPlusSpikes,
        _ => UniversalityClass::RandomLike,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pareto_quantiles(alpha: f64, n: usize, xmin: f64) -> Vec<f64> {
        (1..=n)
            .map(|i| {
                let u = (i as f64 - 0.5) / n as f64;
                xmin * (1.0 - u).powf(-1.0 / (alpha - 1.0))
            })
            .collect()
    }

    #[test]
    fn mle_closed_form() {
        let a = mle_alpha(&[1.0, 2.0, 4.0, 8.0], 1.0).unwrap();
        let want = 1.0 + 4.0 / (6.0 * 2f64.ln());
        assert!((a - want).abs() < 1e-12);
        assert!((a - 1.96181).abs() < 5e-5);
    }

    #[test]
    fn mle_singleton_at_e() {
        let xmin = 0.37;
        assert_eq!(mle_alpha(&[std::f64::consts::E * xmin], xmin).unwrap(), 2.0);
    }

    #[test]
    fn mle_errors() {
        assert!(matches!(mle_alpha(&[2.0, 2.0], 2.0), Err(Error::InfiniteAlpha)));
        assert!(matches!(mle_alpha(&[0.5, 2.0], 1.0), Err(Error::Domain(_))));
        assert!(matches!(mle_alpha::<f64>(&[], 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn ks_one_point() {
        assert_eq!(ks_distance(&[2.0], 2.0, 1.0).unwrap(), 0.5);
        assert!(matches!(ks_distance(&[2.0], 1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn ks_on_model_quantiles() {
        let tail = pareto_quantiles(2.0, 100, 1.0);
        let d = ks_distance(&tail, 2.0, 1.0).unwrap();
        assert!(d <= 0.005 + 1e-12, "{d}");
    }

    #[test]
    fn fit_recovers_quantile_exponent() {
        for &a in &[2.0, 2.5, 3.0] {
            let s = Spectrum::synthetic(pareto_quantiles(a, 1000, 1.0), "pq").unwrap();
            let fit = fit_pl(&s).unwrap();
            assert!((fit.alpha - a).abs() <= 0.1, "alpha {a}: got {}", fit.alpha);
            if a == 2.5 {
                assert!(fit.alpha >= 2.4 && fit.alpha <= 2.6);
                assert!(fit.xmin <= s.eigenvalues[100], "xmin {} not in bottom decile", fit.xmin);
            }
        }
    }

    #[test]
    fn fit_refuses_small_spectrum() {
        let s = Spectrum::synthetic(vec![1.0, 2.0, 3.0, 4.0, 5.0], "small").unwrap();
        assert!(matches!(fit_pl(&s), Err(Error::TooFewEigenvalues { found: 5, required: 8 })));
    }

    #[test]
    fn fit_rejects_constant_spectrum() {
        let s = Spectrum::synthetic(vec![2.0; 10], "flat").unwrap();
        assert!(matches!(fit_pl(&s), Err(Error::DegenerateSpectrum(_))));
    }

    #[test]
    fn fit_reports_recomputable_ks() {
        let s = Spectrum::synthetic(pareto_quantiles(2.2, 200, 0.3), "pq").unwrap();
        let fit = fit_pl(&s).unwrap();
        let tail: Vec<f64> = s.positive().iter().copied().filter(|&x| x >= fit.xmin).collect();
        assert_eq!(tail.len(), fit.tail_count);
        assert!((ks_distance(&tail, fit.alpha, fit.xmin).unwrap() - fit.d_ks).abs() < 1e-12);
        assert!(fit.xmin <= fit.xmax);
        assert_eq!(fit.scan.len(), 198);
    }

    #[test]
    fn classes_from_alpha() {
        assert_eq!(UniversalityClass::from_alpha(3.0), UniversalityClass::FatTailed);
        assert_eq!(UniversalityClass::from_alpha(1.5), UniversalityClass::VeryHeavyTailed);
        assert_eq!(UniversalityClass::from_alpha(7.0), UniversalityClass::WeaklyHeavyTailed);
        assert_eq!(UniversalityClass::from_alpha(6.0), UniversalityClass::FatTailed);
        assert_eq!(UniversalityClass::from_alpha(2.0), UniversalityClass::VeryHeavyTailed);
    }

    #[test]
    fn rank_collapse_takes_precedence() {
        let mut eig = vec![0.0; 20];
        eig.extend((1..=80).map(|i| i as f64));
        let s = Spectrum::new(eig, 200, "rc", Default::default()).unwrap();
        assert_eq!(classify(3.0, true, &s), UniversalityClass::RankCollapse);
        // the same zeros in a square layer are not rank collapse
        let sq = Spectrum::new(s.eigenvalues.clone(), 100, "sq", Default::default()).unwrap();
        assert_eq!(classify(3.0, true, &sq), UniversalityClass::FatTailed);
    }

    #[test]
    fn poor_fit_falls_back_to_edge_test() {
        let flat: Vec<f64> = (0..50).map(|i| 1.0 + 0.001 * i as f64).collect();
        let s = Spectrum::synthetic(flat.clone(), "bulk").unwrap();
        assert_eq!(classify(9.0, false, &s), UniversalityClass::RandomLike);
        let mut spiked = flat;
        spiked.push(40.0);
        let s = Spectrum::synthetic(spiked, "spike").unwrap();
        assert_eq!(classify(9.0, false, &s), UniversalityClass::BulkPlusSpikes);
    }

    proptest! {
        #[test]
        fn alpha_scale_invariant(
            tail in proptest::collection::vec(1.0f64..1e3, 8..40),
            k in -10i32..10,
        ) {
            let s = Spectrum::synthetic(tail, "p").unwrap();
            prop_assume!(s.eigenvalues[0] != s.lambda_max());
            let c = 2f64.powi(k);
            let a = fit_pl(&s).unwrap();
            let b = fit_pl(&s.scaled(c)).unwrap();
            prop_assert_eq!(a.alpha, b.alpha);
            prop_assert_eq!(a.tail_count, b.tail_count);
            prop_assert_eq!(a.xmin * c, b.xmin);
        }

        #[test]
        fn alpha_scale_invariant_general_c(
            tail in proptest::collection::vec(1.0f64..1e3, 8..40),
            c in 1e-3f64..1e3,
        ) {
            let s = Spectrum::synthetic(tail, "p").unwrap();
            prop_assume!(s.eigenvalues[0] != s.lambda_max());
            let a = fit_pl(&s).unwrap();
            let b = fit_pl(&s.scaled(c)).unwrap();
            // candidates whose KS distances tie within round-off may swap
            let near_tie = a.scan.iter().filter(|p| (p.d_ks - a.d_ks).abs() < 1e-9).count() > 1;
            prop_assume!(!near_tie);
            prop_assert!((a.alpha - b.alpha).abs() <= 1e-9 * a.alpha);
            prop_assert_eq!(a.tail_count, b.tail_count);
        }

        #[test]
        fn mle_decreasing_in_each_element(
            tail in proptest::collection::vec(1.0f64..100.0, 2..20),
            idx in any::<proptest::sample::Index>(),
            bump in 0.01f64..10.0,
        ) {
            let xmin = 1.0;
            prop_assume!(tail.iter().any(|&x| x > xmin));
            let base = mle_alpha(&tail, xmin).unwrap();
            let mut bigger = tail.clone();
            bigger[idx.index(tail.len())] += bump;
            prop_assert!(mle_alpha(&bigger, xmin).unwrap() < base);
        }

        #[test]
        fn fit_ks_matches_recomputation(tail in proptest::collection::vec(0.01f64..50.0, 8..60)) {
            let s = Spectrum::synthetic(tail, "p").unwrap();
            prop_assume!(s.eigenvalues[0] != s.lambda_max());
            let fit = fit_pl(&s).unwrap();
            let t: Vec<f64> = s.positive().iter().copied().filter(|&x| x >= fit.xmin).collect();
            prop_assert_eq!(t.len(), fit.tail_count);
            prop_assert!((ks_distance(&t, fit.alpha, fit.xmin).unwrap() - fit.d_ks).abs() < 1e-12);
        }
    }
}
