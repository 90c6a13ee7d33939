//! Marchenko-Pastur reference law, Tracy-Widom edge scale and seeded
//! random-matrix samplers.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Normal, Pareto};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{LinalgReal, Real};
use crate::spectral::{eigenspectrum, Spectrum};
use crate::tensor_io::{Normalization, WeightMatrix};

/// Inverted MP eigenvalues below this trigger a resample.
pub const IMP_MIN_EIGENVALUE: f64 = 1e-12;

/// Resampling budget for [`sample_imp_spectrum`].
pub const IMP_MAX_ATTEMPTS: usize = 10;

/// Marchenko-Pastur law for element variance `sigma2` and aspect ratio `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MpLaw<T: Real> {
    pub sigma2: T,
    pub q: T,
    pub lambda_minus: T,
    pub lambda_plus: T,
}

pub fn mp_law<T: Real>(sigma2: T, q: T) -> Result<MpLaw<T>> {
    if !(sigma2 > T::zero()) || !sigma2.is_finite() {
        return Err(Error::Domain(format!("MP law needs sigma2 > 0, got {sigma2}")));
    }
    if !(q >= T::one()) || !q.is_finite() {
        return Err(Error::Domain(format!("MP law needs Q >= 1, got {q}")));
    }
    let r = (T::one() / q).sqrt();
    Ok(MpLaw {
        sigma2,
        q,
        lambda_minus: sigma2 * (T::one() - r) * (T::one() - r),
        lambda_plus: sigma2 * (T::one() + r) * (T::one() + r),
    })
}

/// MP density; zero off the bulk `[lambda_minus, lambda_plus]`.
pub fn mp_density<T: Real>(law: &MpLaw<T>, lambda: T) -> T {
    if !(lambda > law.lambda_minus && lambda < law.lambda_plus) || lambda <= T::zero() {
        return T::zero();
    }
    let spread = ((law.lambda_plus - lambda) * (lambda - law.lambda_minus)).sqrt();
    law.q * spread / (T::lit(2.0) * T::PI() * law.sigma2 * lambda)
}

/// Edge fluctuation scale `lambda_plus * M^(-2/3)`.
pub fn tw_fluctuation<T: Real>(law: &MpLaw<T>, m: usize) -> T {
    law.lambda_plus * T::count(m).powf(T::lit(-2.0 / 3.0))
}

/// `lambda_plus + delta_tw`: the largest eigenvalue the MP null explains.
pub fn mp_threshold<T: Real>(law: &MpLaw<T>, m: usize) -> T {
    law.lambda_plus + tw_fluctuation(law, m)
}

/// Eigenvalues above the MP edge plus Tracy-Widom scale, with the element
/// variance estimated as the mean eigenvalue (`||W||_F^2 / (N M)`).
pub fn mp_outliers<T: Real>(s: &Spectrum<T>) -> Result<Vec<T>> {
    let sigma2 = s.trace() / T::count(s.len());
    let law = mp_law(sigma2, s.q)?;
    let cut = mp_threshold(&law, s.m);
    Ok(s.eigenvalues.iter().copied().filter(|&x| x > cut).collect())
}

/// Identifies a sampler run: `(algorithm, seed)` fixes the output bit for bit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SeededSampler {
    pub seed: u64,
    pub algorithm_id: String,
}

impl SeededSampler {
    pub fn new(algorithm_id: impl Into<String>, seed: u64) -> Self {
        SeededSampler { seed, algorithm_id: algorithm_id.into() }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn check_shape(n: usize, m: usize) -> Result<()> {
    if m < 2 || n < m {
        return Err(Error::Domain(format!("sampler needs N >= M >= 2, got N={n}, M={m}")));
    }
    Ok(())
}

fn matrix_from_rows<T: Real>(name: &str, n: usize, m: usize, mut next: impl FnMut() -> f64) -> WeightMatrix<T> {
    let values = DMatrix::from_row_iterator(n, m, (0..n * m).map(|_| T::lit(next())));
    WeightMatrix { name: name.into(), values, transposed: false, normalization: Normalization::None }
}

/// `N x M` matrix of i.i.d. `N(0, sigma^2)` entries, filled row by row.
pub fn sample_gaussian<T: Real>(n: usize, m: usize, sigma: f64, seed: u64) -> Result<WeightMatrix<T>> {
    check_shape(n, m)?;
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Domain(format!("gaussian sigma {sigma}: {e}")))?;
    let mut rng = SeededSampler::new("gaussian", seed).rng();
    Ok(matrix_from_rows("gaussian", n, m, || normal.sample(&mut rng)))
}

/// Sign convention for Pareto entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParetoSigns {
    /// Every entry is its (positive) magnitude.
    #[default]
    Positive,
    /// Independent Rademacher signs.
    Symmetric,
}

impl std::fmt::Display for ParetoSigns {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ParetoSigns::Positive => "positive",
            ParetoSigns::Symmetric => "symmetric",
        })
    }
}

/// `N x M` matrix of Pareto(`mu`, `x_m`) magnitudes, so every `|w| >= x_m`.
pub fn sample_pareto<T: Real>(
    n: usize,
    m: usize,
    mu: f64,
    x_m: f64,
    signs: ParetoSigns,
    seed: u64,
) -> Result<WeightMatrix<T>> {
    check_shape(n, m)?;
    let pareto = Pareto::new(x_m, mu).map_err(|e| Error::Domain(format!("pareto mu={mu}, x_m={x_m}: {e}")))?;
    let mut rng = SeededSampler::new("pareto", seed).rng();
    Ok(matrix_from_rows("pareto", n, m, || {
        let mag: f64 = pareto.sample(&mut rng);
        match signs {
            ParetoSigns::Positive => mag,
            ParetoSigns::Symmetric if rng.random::<bool>() => mag,
            ParetoSigns::Symmetric => -mag,
        }
    }))
}

fn chi<R: Rng>(k: usize, rng: &mut R) -> f64 {
    ChiSquared::new(k as f64).expect("positive degrees of freedom").sample(rng).sqrt()
}

/// Exact MP (real Wishart) spectrum of `X = WᵀW / N` for Gaussian `W` with
/// `N = round(Q M)` and element variance `sigma2`, drawn through the
/// bidiagonal Laguerre model instead of a dense decomposition.
pub fn sample_mp_spectrum<T: Real>(m: usize, q: f64, sigma2: f64, seed: u64) -> Result<Spectrum<T>> {
    if !(q >= 1.0) || !(sigma2 > 0.0) {
        return Err(Error::Domain(format!("MP sampler needs Q >= 1 and sigma2 > 0, got Q={q}, sigma2={sigma2}")));
    }
    let n = (q * m as f64).round() as usize;
    check_shape(n, m)?;
    let mut rng = SeededSampler::new("laguerre", seed).rng();
    let d: Vec<f64> = (0..m).map(|i| chi(n - i, &mut rng)).collect();
    let s: Vec<f64> = (0..m - 1).map(|i| chi(m - 1 - i, &mut rng)).collect();
    let scale = sigma2 / n as f64;
    let diag: Vec<T> = (0..m)
        .map(|i| {
            let below = if i == 0 { 0.0 } else { s[i - 1] * s[i - 1] };
            T::lit((d[i] * d[i] + below) * scale)
        })
        .collect();
    let off: Vec<T> = (0..m - 1).map(|i| T::lit(d[i] * s[i] * scale)).collect();
    let eig = linalg::tridiagonal_eigenvalues(&diag, &off)?;
    Spectrum::new(eig, n, "mp", Normalization::None)
}

/// Inverse-MP spectrum: reciprocals of a Gaussian Wishart spectrum with
/// `N = round(Q M)`, rescaled to mean eigenvalue 1. The IMP parameter is
/// `kappa = (Q - 1) / 2`.
pub fn sample_imp_spectrum<T: LinalgReal>(m: usize, q: f64, seed: u64) -> Result<Spectrum<T>> {
    if !(q > 1.0) {
        return Err(Error::Domain(format!("inverse-MP sampler needs Q > 1, got {q}")));
    }
    if m < 8 {
        return Err(Error::Domain(format!("inverse-MP sampler needs M >= 8, got {m}")));
    }
    let n = (q * m as f64).round() as usize;
    check_shape(n, m)?;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = SeededSampler::new("imp", seed).rng();
    for _ in 0..IMP_MAX_ATTEMPTS {
        let w: WeightMatrix<T> = matrix_from_rows("imp", n, m, || normal.sample(&mut rng));
        let mp = eigenspectrum(&w)?;
        if mp.eigenvalues[0] < T::lit(IMP_MIN_EIGENVALUE) {
            continue;
        }
        let inv: Vec<T> = mp.eigenvalues.iter().map(|&x| T::one() / x).collect();
        let mean = inv.iter().copied().sum::<T>() / T::count(m);
        let eig = inv.into_iter().map(|x| x / mean).collect();
        return Spectrum::new(eig, n, "imp", Normalization::None);
    }
    Err(Error::SingularSpectrum(format!("MP sample kept a near-zero eigenvalue after {IMP_MAX_ATTEMPTS} attempts")))
}

/// Square diagonal matrix whose ESD is exactly `s`: entries `sqrt(M λ)`.
pub fn diagonal_realization<T: Real>(s: &Spectrum<T>, name: impl Into<String>) -> WeightMatrix<T> {
    let m = s.len();
    let mut values = DMatrix::zeros(m, m);
    for (i, &l) in s.eigenvalues.iter().enumerate() {
        values[(i, i)] = (l * T::count(m)).sqrt();
    }
    WeightMatrix { name: name.into(), values, transposed: false, normalization: Normalization::None }
}

/// Permutes all `N M` entries of `w` uniformly at random. Entries are put in
/// a canonical order first, so the result depends only on their multiset
/// and the seed.
pub fn randomize_elementwise<T: Real>(w: &WeightMatrix<T>, seed: u64) -> WeightMatrix<T> {
    let mut entries: Vec<T> = w.values.iter().copied().collect();
    entries.sort_by(|a, b| a.to_f64_lossy().total_cmp(&b.to_f64_lossy()));
    let mut rng = SeededSampler::new("permute", seed).rng();
    entries.shuffle(&mut rng);
    let (n, m) = w.values.shape();
    WeightMatrix {
        name: w.name.clone(),
        values: DMatrix::from_row_iterator(n, m, entries),
        transposed: w.transposed,
        normalization: w.normalization,
    }
}
