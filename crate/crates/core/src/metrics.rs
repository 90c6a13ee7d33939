//! Shape and scale layer metrics and their layer averages.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::plfit::UniversalityClass;
use crate::rmt;
use crate::scalar::{LinalgReal, Real};
use crate::spectral::{eigenspectrum, spectrum_jsd, DEFAULT_JSD_BINS};
use crate::tensor_io::WeightMatrix;

/// Layers with fewer columns than this are left out of model averages.
pub const MIN_AVERAGED_M: usize = crate::plfit::MIN_FIT_EIGENVALUES;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerMetrics<T: Real> {
    pub alpha: Option<T>,
    /// `log10 λ_max`.
    pub log_spectral_norm: Option<T>,
    pub alpha_hat: Option<T>,
    pub d_ks: Option<T>,
    pub rand_distance: Option<T>,
    pub universality: UniversalityClass,
}

/// `α log10 λ_max`.
pub fn alpha_hat<T: Real>(alpha: T, lambda_max: T) -> Result<T> {
    if !(lambda_max > T::zero()) {
        return Err(Error::Domain(format!("alpha_hat needs lambda_max > 0, got {lambda_max}")));
    }
    Ok(alpha * lambda_max.log10())
}

/// JSD between the ESD of `w` and that of its element-wise randomization.
pub fn rand_distance<T: LinalgReal>(w: &WeightMatrix<T>, seed: u64) -> Result<T> {
    let original = eigenspectrum(w)?;
    let randomized = eigenspectrum(&rmt::randomize_elementwise(w, seed))?;
    spectrum_jsd(&original, &randomized, DEFAULT_JSD_BINS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AverageMode {
    Mean,
    /// `(1/L) Σ log10 q`, the log of the product of layer values per layer.
    LogProductMean,
}

pub fn model_average<T: Real>(per_layer: &[T], mode: AverageMode) -> Result<T> {
    if per_layer.is_empty() {
        return Err(Error::Domain("model average over zero layers".into()));
    }
    let n = T::count(per_layer.len());
    match mode {
        AverageMode::Mean => Ok(per_layer.iter().copied().sum::<T>() / n),
        AverageMode::LogProductMean => {
            let mut acc = T::zero();
            for &q in per_layer {
                if !(q > T::zero()) {
                    return Err(Error::Domain(format!("log-product mean needs positive values, got {q}")));
                }
                acc += q.log10();
            }
            Ok(acc / n)
        }
    }
}
