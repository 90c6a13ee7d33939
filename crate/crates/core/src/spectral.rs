//! Empirical spectral densities of layer correlation matrices.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{LinalgReal, Real};
use crate::tensor_io::{Normalization, WeightMatrix};

/// Eigenvalues in `[-NEGATIVE_CLAMP, 0)` are treated as round-off and set to 0.
pub const NEGATIVE_CLAMP: f64 = 1e-12;

/// Default bin count for spectrum comparisons.
pub const DEFAULT_JSD_BINS: usize = 100;

/// Sorted eigenvalues of `X = WᵀW / N` together with the matrix shape.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum<T: Real> {
    pub eigenvalues: Vec<T>,
    pub n: usize,
    pub m: usize,
    pub q: T,
    pub source_name: String,
    pub normalization: Normalization,
}

impl<T: Real> Spectrum<T> {
    /// Validates and sorts a raw eigenvalue list.
    pub fn new(
        mut eigenvalues: Vec<T>,
        n: usize,
        source_name: impl Into<String>,
        normalization: Normalization,
    ) -> Result<Self> {
        let m = eigenvalues.len();
        if m == 0 {
            return Err(Error::EmptySpectrum);
        }
        if n < m {
            return Err(Error::Contract(format!("spectrum needs N >= M, got N={n}, M={m}")));
        }
        let clamp = T::lit(NEGATIVE_CLAMP);
        for x in eigenvalues.iter_mut() {
            if !x.is_finite() {
                return Err(Error::Numeric("non-finite eigenvalue".into()));
            }
            if *x < T::zero() {
                if *x >= -clamp {
                    *x = T::zero();
                } else {
                    return Err(Error::Numeric(format!("negative eigenvalue {x}")));
                }
            }
        }
        eigenvalues.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        Ok(Spectrum { q: T::count(n) / T::count(m), eigenvalues, n, m, source_name: source_name.into(), normalization })
    }

    /// A spectrum with no matrix behind it (`N = M`).
    pub fn synthetic(eigenvalues: Vec<T>, name: impl Into<String>) -> Result<Self> {
        let n = eigenvalues.len();
        Self::new(eigenvalues, n, name, Normalization::None)
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn lambda_max(&self) -> T {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    /// Eigenvalues at or below this are numerically zero: the usual rank
    /// cut `sigma <= sigma_max * max(N, M) * eps`, squared.
    pub fn zero_tolerance(&self) -> T {
        let rel = T::count(self.n.max(self.m)) * T::epsilon();
        self.lambda_max() * rel * rel
    }

    pub fn zero_count(&self) -> usize {
        let tol = self.zero_tolerance();
        self.eigenvalues.iter().take_while(|&&x| x <= tol).count()
    }

    /// Strictly positive eigenvalues, ascending.
    pub fn positive(&self) -> &[T] {
        &self.eigenvalues[self.zero_count()..]
    }

    pub fn lambda_min_positive(&self) -> Option<T> {
        self.positive().first().copied()
    }

    pub fn trace(&self) -> T {
        self.eigenvalues.iter().copied().sum()
    }

    /// Every eigenvalue multiplied by `c`.
    pub fn scaled(&self, c: T) -> Self {
        Spectrum { eigenvalues: self.eigenvalues.iter().map(|&x| x * c).collect(), ..self.clone() }
    }

    /// Rescaled so the eigenvalues sum to `M`.
    pub fn trace_normalized(&self) -> Result<Self> {
        let tr = self.trace();
        if !(tr > T::zero()) {
            return Err(Error::DegenerateMatrix(format!("spectrum `{}` has zero trace", self.source_name)));
        }
        let mut out = self.scaled(T::count(self.m) / tr);
        out.normalization = Normalization::TraceM;
        Ok(out)
    }
}

/// The `M` eigenvalues of `X = WᵀW / N`, from the singular values of `W`.
pub fn eigenspectrum<T: LinalgReal>(w: &WeightMatrix<T>) -> Result<Spectrum<T>> {
    let n = T::count(w.n());
    let sv = linalg::singular_values(&w.values)?;
    let eig = sv.into_iter().map(|s| s * s / n).collect();
    Spectrum::new(eig, w.n(), w.name.clone(), w.normalization)
}

/// Histogram of `ln λ` over equal-width bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogHistogram<T: Real> {
    /// Edges in `ln λ` space, strictly increasing, `bins + 1` of them.
    pub bin_edges: Vec<T>,
    /// `count / width` per bin.
    pub densities: Vec<T>,
    pub counts: Vec<usize>,
    /// Number of eigenvalues that landed in a bin.
    pub total_mass: T,
    /// Zero eigenvalues excluded from the bins.
    pub zero_count: usize,
    /// Positive eigenvalues below the requested lower bound.
    pub below_range: usize,
}

impl<T: Real> LogHistogram<T> {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self, i: usize) -> T {
        self.bin_edges[i + 1] - self.bin_edges[i]
    }

    /// Bin probabilities, summing to 1.
    pub fn probabilities(&self) -> Vec<T> {
        let total = self.total_mass;
        self.densities.iter().enumerate().map(|(i, &d)| d * self.width(i) / total).collect()
    }
}

/// Equal-width edges covering `[lo, hi]` (`ln` values). A degenerate range is
/// widened to unit width around its centre.
pub fn log_edges<T: Real>(lo: T, hi: T, bins: usize) -> Vec<T> {
    let half = T::lit(0.5);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - half, lo + half) };
    let width = (hi - lo) / T::count(bins);
    let mut edges: Vec<T> = (0..bins).map(|i| lo + width * T::count(i)).collect();
    edges.push(hi);
    edges
}

/// Bins `ln x` for each value into `edges`: half-open `[a, b)` with the last
/// bin closed. Values outside the edges are skipped and counted.
fn bin_counts<T: Real>(values: &[T], edges: &[T]) -> (Vec<usize>, usize) {
    let bins = edges.len() - 1;
    let mut counts = vec![0usize; bins];
    let mut outside = 0;
    for &x in values {
        let v = x.ln();
        if v < edges[0] || v > edges[bins] {
            outside += 1;
            continue;
        }
        // partition_point gives the first edge strictly greater than v
        let idx = edges.partition_point(|&e| e <= v);
        counts[idx.saturating_sub(1).min(bins - 1)] += 1;
    }
    (counts, outside)
}

fn histogram_from_counts<T: Real>(
    edges: Vec<T>,
    counts: Vec<usize>,
    zero_count: usize,
    below: usize,
) -> LogHistogram<T> {
    let densities = counts.iter().enumerate().map(|(i, &c)| T::count(c) / (edges[i + 1] - edges[i])).collect();
    let total_mass = T::count(counts.iter().sum());
    LogHistogram { bin_edges: edges, densities, counts, total_mass, zero_count, below_range: below }
}

/// Log-spaced histogram over `[max(lower, λ_min>0), λ_max]`.
pub fn log_histogram<T: Real>(s: &Spectrum<T>, bins: usize, lower: Option<T>) -> Result<LogHistogram<T>> {
    if bins < 2 {
        return Err(Error::Domain(format!("log_histogram needs at least 2 bins, got {bins}")));
    }
    let pos = s.positive();
    let (Some(&first), Some(&last)) = (pos.first(), pos.last()) else {
        return Err(Error::EmptySpectrum);
    };
    let lo = match lower {
        Some(l) if l > first => l,
        _ => first,
    };
    if lo > last {
        return Err(Error::EmptySpectrum);
    }
    let edges = log_edges(lo.ln(), last.ln(), bins);
    let below = pos.iter().filter(|&&x| x < lo).count();
    let kept: Vec<T> = pos.iter().copied().filter(|&x| x >= lo).collect();
    let (counts, _) = bin_counts(&kept, &edges);
    Ok(histogram_from_counts(edges, counts, s.zero_count(), below))
}

/// Histogram of `s` on caller-supplied `ln λ` edges.
pub fn log_histogram_on_edges<T: Real>(s: &Spectrum<T>, edges: &[T]) -> Result<LogHistogram<T>> {
    if edges.len() < 3 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("edges must be strictly increasing with at least 2 bins".into()));
    }
    let pos = s.positive();
    if pos.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    let (counts, outside) = bin_counts(pos, edges);
    Ok(histogram_from_counts(edges.to_vec(), counts, s.zero_count(), outside))
}

/// Common `ln λ` grid spanning the positive parts of both spectra.
pub fn shared_log_edges<T: Real>(a: &Spectrum<T>, b: &Spectrum<T>, bins: usize) -> Result<Vec<T>> {
    let (pa, pb) = (a.positive(), b.positive());
    if pa.is_empty() || pb.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    let lo = pa[0].min(pb[0]).ln();
    let hi = pa[pa.len() - 1].max(pb[pb.len() - 1]).ln();
    Ok(log_edges(lo, hi, bins))
}

/// Redistributes the mass of `h` onto `edges`, assuming uniform density
/// inside each source bin. Returns bin probabilities.
fn rebin<T: Real>(h: &LogHistogram<T>, edges: &[T]) -> Vec<T> {
    let probs = h.probabilities();
    if h.bin_edges.as_slice() == edges {
        return probs;
    }
    let bins = edges.len() - 1;
    let mut out = vec![T::zero(); bins];
    for (i, &p) in probs.iter().enumerate() {
        if p == T::zero() {
            continue;
        }
        let (a, b) = (h.bin_edges[i], h.bin_edges[i + 1]);
        let w = b - a;
        for (j, slot) in out.iter_mut().enumerate() {
            let lo = a.max(edges[j]);
            let hi = b.min(edges[j + 1]);
            if hi > lo {
                *slot += p * (hi - lo) / w;
            }
        }
    }
    out
}

/// Jensen-Shannon divergence (base 2, so in `[0, 1]`) between probability vectors.
pub fn jsd_probabilities<T: Real>(p: &[T], q: &[T]) -> T {
    let half = T::lit(0.5);
    let kl_to_mid = |x: &[T], y: &[T]| -> T {
        x.iter()
            .zip(y)
            .filter(|(&xi, _)| xi > T::zero())
            .map(|(&xi, &yi)| {
                let mid = (xi + yi) * half;
                xi * (xi / mid).log2()
            })
            .sum()
    };
    let d = half * (kl_to_mid(p, q) + kl_to_mid(q, p));
    d.max(T::zero()).min(T::one())
}

/// Jensen-Shannon divergence between two log histograms.
///
/// Histograms on different grids are first moved onto a shared grid spanning
/// the union of their ranges with the larger of the two bin counts.
pub fn jensen_shannon<T: Real>(a: &LogHistogram<T>, b: &LogHistogram<T>) -> Result<T> {
    if !(a.total_mass > T::zero()) || !(b.total_mass > T::zero()) {
        return Err(Error::EmptySpectrum);
    }
    if a.bin_edges == b.bin_edges {
        return Ok(jsd_probabilities(&a.probabilities(), &b.probabilities()));
    }
    let lo = a.bin_edges[0].min(b.bin_edges[0]);
    let hi = a.bin_edges[a.bins()].max(b.bin_edges[b.bins()]);
    let edges = log_edges(lo, hi, a.bins().max(b.bins()));
    Ok(jsd_probabilities(&rebin(a, &edges), &rebin(b, &edges)))
}

/// JSD between two spectra histogrammed on one shared log grid.
pub fn spectrum_jsd<T: Real>(a: &Spectrum<T>, b: &Spectrum<T>, bins: usize) -> Result<T> {
    let edges = shared_log_edges(a, b, bins)?;
    let ha = log_histogram_on_edges(a, &edges)?;
    let hb = log_histogram_on_edges(b, &edges)?;
    jensen_shannon(&ha, &hb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use std::f64::consts::E;

    use crate::tensor_io::orient;

    fn hist(edges: Vec<f64>, counts: Vec<usize>) -> LogHistogram<f64> {
        histogram_from_counts(edges, counts, 0, 0)
    }

    #[test]
    fn scaled_identity_has_unit_eigenvalues() {
        let n = 6;
        let w = orient("id", DMatrix::<f64>::identity(n, n) * (n as f64).sqrt()).unwrap();
        let s = eigenspectrum(&w).unwrap();
        assert_eq!(s.len(), n);
        assert!(s.eigenvalues.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn diagonal_eigenvalues_are_squares_over_n() {
        let w = orient("d", DMatrix::<f64>::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0])).unwrap();
        let s = eigenspectrum(&w).unwrap();
        assert!((s.eigenvalues[0] - 2.0).abs() < 1e-12);
        assert!((s.eigenvalues[1] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_spectrum_is_zero() {
        let w = orient("z", DMatrix::<f64>::zeros(4, 3)).unwrap();
        let s = eigenspectrum(&w).unwrap();
        assert_eq!(s.eigenvalues, vec![0.0; 3]);
        assert_eq!(s.zero_count(), 3);
        assert!(matches!(log_histogram(&s, 10, None), Err(Error::EmptySpectrum)));
    }

    #[test]
    fn small_negative_eigenvalues_clamp() {
        let s = Spectrum::synthetic(vec![-1e-13, 1.0], "s").unwrap();
        assert_eq!(s.eigenvalues, vec![0.0, 1.0]);
        assert!(matches!(Spectrum::synthetic(vec![-1e-6, 1.0], "s"), Err(Error::Numeric(_))));
    }

    #[test]
    fn log_histogram_half_open_bins() {
        let s = Spectrum::synthetic(vec![1.0, E, E * E], "e").unwrap();
        let h = log_histogram(&s, 2, None).unwrap();
        assert_eq!(h.bin_edges, vec![0.0, 1.0, 2.0]);
        assert_eq!(h.counts, vec![1, 2]);
        let mass: f64 = h.densities.iter().enumerate().map(|(i, d)| d * h.width(i)).sum();
        assert!((mass - h.total_mass).abs() < 1e-12);
    }

    #[test]
    fn single_positive_eigenvalue_occupies_one_bin() {
        let s = Spectrum::synthetic(vec![0.0, 0.0, 3.0], "one").unwrap();
        let h = log_histogram(&s, 5, None).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.zero_count, 2);
        assert_eq!(h.total_mass, 1.0);
    }

    #[test]
    fn lower_bound_excludes_small_values() {
        let s = Spectrum::synthetic(vec![0.1, 1.0, 2.0, 4.0], "l").unwrap();
        let h = log_histogram(&s, 3, Some(0.5)).unwrap();
        assert_eq!(h.below_range, 1);
        assert_eq!(h.total_mass, 3.0);
    }

    #[test]
    fn jsd_identical_is_zero() {
        let h = hist(vec![0.0, 1.0, 2.0, 3.0], vec![3, 1, 7]);
        assert_eq!(jensen_shannon(&h, &h).unwrap(), 0.0);
    }

    #[test]
    fn jsd_disjoint_is_one() {
        let a = hist(vec![0.0, 1.0, 2.0], vec![4, 0]);
        let b = hist(vec![0.0, 1.0, 2.0], vec![0, 9]);
        assert!((jensen_shannon(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        // disjoint ranges on different grids stay disjoint after rebinning
        let c = hist(vec![0.0, 0.5, 1.0], vec![2, 2]);
        let d = hist(vec![2.0, 2.5, 3.0], vec![1, 3]);
        assert!((jensen_shannon(&c, &d).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn jsd_hand_value() {
        // 1/2 KL(P||M) + 1/2 KL(Q||M), M = (0.75, 0.25), base 2
        let want = 0.5 * (1.0f64 / 0.75).log2() + 0.5 * (0.5 * (0.5f64 / 0.75).log2() + 0.5 * (0.5f64 / 0.25).log2());
        let got = jsd_probabilities(&[1.0, 0.0], &[0.5, 0.5]);
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.31128).abs() < 1e-5);
    }

    #[test]
    fn jsd_empty_histogram_errors() {
        let a = hist(vec![0.0, 1.0, 2.0], vec![0, 0]);
        let b = hist(vec![0.0, 1.0, 2.0], vec![1, 0]);
        assert!(matches!(jensen_shannon(&a, &b), Err(Error::EmptySpectrum)));
    }

    #[test]
    fn rebin_preserves_mass() {
        let h = hist(vec![0.0, 1.0, 2.0, 3.0], vec![1, 2, 3]);
        let p = rebin(&h, &log_edges(-1.0, 4.0, 7));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
