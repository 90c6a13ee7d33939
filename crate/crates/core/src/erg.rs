//! The trace-log (`det X̃ = 1`) tail condition, its gap to the power-law
//! tail start, and projection of a layer onto its effective correlation space.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::plfit::PowerLawFit;
use crate::scalar::{LinalgReal, Real};
use crate::spectral::Spectrum;
use crate::tensor_io::{Normalization, WeightMatrix};

/// `Σ ln λ` over a tail of strictly positive eigenvalues.
pub fn trace_log<T: Real>(tail: &[T]) -> Result<T> {
    let mut sum = T::zero();
    for &x in tail {
        if !(x > T::zero()) {
            return Err(Error::Domain(format!("trace_log needs positive eigenvalues, got {x}")));
        }
        sum += x.ln();
    }
    Ok(sum)
}

/// One point of the detx scan: the `k`-th largest eigenvalue and the
/// cumulative `Σ ln λ` over the top `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetxPoint<T: Real> {
    pub lambda: T,
    pub cumulative_log: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgResult<T: Real> {
    pub lambda_min_detx: T,
    /// `|Σ ln λ|` over the selected tail, in nats.
    pub residual: T,
    pub tail_count: usize,
    /// True when the cumulative sum takes both signs over the scan.
    pub crossed: bool,
    pub normalization: Normalization,
    /// Scan in descending eigenvalue order; exported as plot data.
    #[serde(skip)]
    pub curve: Vec<DetxPoint<T>>,
}

/// Scans tails of the top `k` positive eigenvalues and picks the `k` whose
/// `|Σ ln λ|` is smallest, ties going to the larger `k`.
pub fn detx_lambda_min<T: Real>(s: &Spectrum<T>) -> Result<ErgResult<T>> {
    let pos = s.positive();
    if pos.is_empty() {
        return Err(Error::DegenerateSpectrum("no positive eigenvalues for the detx scan".into()));
    }
    let mut curve = Vec::with_capacity(pos.len());
    let mut acc = T::zero();
    for &x in pos.iter().rev() {
        acc += x.ln();
        curve.push(DetxPoint { lambda: x, cumulative_log: acc });
    }
    let mut best = 0;
    for (i, p) in curve.iter().enumerate() {
        if p.cumulative_log.abs() <= curve[best].cumulative_log.abs() {
            best = i;
        }
    }
    let crossed =
        curve.iter().any(|p| p.cumulative_log > T::zero()) && curve.iter().any(|p| p.cumulative_log < T::zero());
    Ok(ErgResult {
        lambda_min_detx: curve[best].lambda,
        residual: curve[best].cumulative_log.abs(),
        tail_count: best + 1,
        crossed,
        normalization: s.normalization,
        curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EcsGap<T: Real> {
    /// `λ_min^PL − λ_min^detx`; negative values mark over-regularization.
    pub delta_lambda_min: T,
}

/// Signed gap between the power-law and detx tail starts, which must come
/// from identically normalized spectra.
pub fn delta_lambda_min<T: Real>(fit: &PowerLawFit<T>, erg: &ErgResult<T>) -> Result<EcsGap<T>> {
    if fit.normalization != erg.normalization {
        return Err(Error::Contract(format!(
            "power-law fit ({}) and detx scan ({}) use different normalizations",
            fit.normalization, erg.normalization
        )));
    }
    Ok(EcsGap { delta_lambda_min: fit.xmin - erg.lambda_min_detx })
}

/// Truncated-SVD reconstruction keeping the components with `σ²/N >= lambda_min`.
pub fn ecs_project<T: LinalgReal>(w: &WeightMatrix<T>, lambda_min: T) -> Result<WeightMatrix<T>> {
    if !(lambda_min > T::zero()) {
        return Err(Error::Domain(format!("ECS threshold must be positive, got {lambda_min}")));
    }
    let n = T::count(w.n());
    let (sq, v) = linalg::gram_eigenpairs(&w.values)?;
    let keep = sq.iter().take_while(|&&s2| s2 / n >= lambda_min).count();
    if keep == 0 {
        return Err(Error::EmptyEcs(lambda_min.to_f64_lossy()));
    }
    // W V_k V_kᵀ equals U_k Σ_k V_kᵀ
    let vk = v.columns(0, keep);
    let values = &w.values * vk * vk.transpose();
    Ok(WeightMatrix { name: w.name.clone(), values, transposed: w.transposed, normalization: w.normalization })
}
