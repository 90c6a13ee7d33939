//! Correlation-trap detection: spikes that survive element-wise
//! randomization of a layer are traced to anomalous entries, not learned
//! correlations.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::plfit;
use crate::rmt;
use crate::scalar::LinalgReal;
use crate::spectral::eigenspectrum;
use crate::tensor_io::WeightMatrix;

/// Randomizations per layer unless configured otherwise.
pub const DEFAULT_TRAP_SEEDS: usize = 10;

/// A trustworthy power-law fit below this exponent on the randomized
/// spectrum means the MP null itself is questionable.
pub const HEAVY_TAIL_CAVEAT_ALPHA: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrapReport<T: LinalgReal> {
    /// `Σ W² / (N M)`, identical for every permutation.
    pub sigma2_hat: T,
    pub lambda_plus: T,
    pub delta_tw: T,
    /// Exceedances of `lambda_plus + delta_tw` under the first seed, descending.
    pub trap_eigenvalues: Vec<T>,
    pub has_trap: bool,
    pub num_seeds: usize,
    pub detection_fraction: T,
    /// Exceedance count per seed, in seed order.
    pub exceedances: Vec<usize>,
    /// Fitted exponent of the first randomized spectrum when the fit is good.
    pub randomized_alpha: Option<T>,
    pub heavy_tail_caveat: bool,
}

/// Randomizes `w` once per seed and counts eigenvalues above the MP edge
/// plus Tracy-Widom scale. A trap is reported when at least half the seeds
/// show one.
pub fn detect_traps<T: LinalgReal>(w: &WeightMatrix<T>, seeds: &[u64]) -> Result<TrapReport<T>> {
    if seeds.is_empty() {
        return Err(Error::Domain("trap detection needs at least one seed".into()));
    }
    let entries = T::count(w.n()) * T::count(w.m());
    let sigma2_hat = w.frobenius_sq() / entries;
    if !(sigma2_hat > T::zero()) {
        return Err(Error::DegenerateMatrix(format!("layer `{}` is all zeros", w.name)));
    }
    let law = rmt::mp_law(sigma2_hat, w.q())?;
    let delta_tw = rmt::tw_fluctuation(&law, w.m());
    let cut = law.lambda_plus + delta_tw;

    let spectra = seeds
        .par_iter()
        .map(|&seed| eigenspectrum(&rmt::randomize_elementwise(w, seed)))
        .collect::<Result<Vec<_>>>()?;

    let exceedances: Vec<usize> = spectra.iter().map(|s| s.eigenvalues.iter().filter(|&&x| x > cut).count()).collect();
    let detected = exceedances.iter().filter(|&&c| c > 0).count();
    let detection_fraction = T::count(detected) / T::count(seeds.len());

    let first = &spectra[0];
    let trap_eigenvalues: Vec<T> = first.eigenvalues.iter().rev().copied().filter(|&x| x > cut).collect();
    let randomized_alpha = plfit::fit_pl(first).ok().filter(|f| f.is_good()).map(|f| f.alpha);
    let heavy_tail_caveat = randomized_alpha.is_some_and(|a| a < T::lit(HEAVY_TAIL_CAVEAT_ALPHA));

    Ok(TrapReport {
        sigma2_hat,
        lambda_plus: law.lambda_plus,
        delta_tw,
        trap_eigenvalues,
        has_trap: detection_fraction >= T::lit(0.5),
        num_seeds: seeds.len(),
        detection_fraction,
        exceedances,
        randomized_alpha,
        heavy_tail_caveat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rmt::ParetoSigns;
    use nalgebra::DMatrix;

    fn seeds(n: u64) -> Vec<u64> {
        (0..n).collect()
    }

    #[test]
    fn planted_element_is_a_trap() {
        let mut w: WeightMatrix<f64> = rmt::sample_gaussian(200, 200, 0.1, 21).unwrap();
        w.values[(10, 20)] = 5.0;
        let r = detect_traps(&w, &seeds(5)).unwrap();
        // (Σ W²)/(N M) ≈ (200² · 0.01 + 25) / 200²
        assert!((r.sigma2_hat - 0.010625).abs() < 5e-4);
        assert!((r.lambda_plus - 0.0425).abs() < 2e-3);
        assert!(r.has_trap);
        assert_eq!(r.detection_fraction, 1.0);
        // the column holding the spike alone gives a Rayleigh quotient of about 25/N + σ²
        let top = r.trap_eigenvalues[0];
        assert!(top > 0.125 && top < 0.2, "{top}");
    }

    #[test]
    fn gaussian_has_no_trap() {
        let w: WeightMatrix<f64> = rmt::sample_gaussian(200, 200, 0.1, 5).unwrap();
        let r = detect_traps(&w, &seeds(5)).unwrap();
        assert!(!r.has_trap);
        assert!(!r.heavy_tail_caveat);
    }

    #[test]
    fn heavy_tailed_entries_raise_caveat() {
        let w: WeightMatrix<f64> = rmt::sample_pareto(400, 400, 1.0, 1.0, ParetoSigns::Positive, 2).unwrap();
        let r = detect_traps(&w, &seeds(2)).unwrap();
        assert!(r.heavy_tail_caveat, "{:?}", r.randomized_alpha);
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        let w = crate::tensor_io::orient("z", DMatrix::<f64>::zeros(5, 5)).unwrap();
        assert!(matches!(detect_traps(&w, &[1]), Err(Error::DegenerateMatrix(_))));
        let g: WeightMatrix<f64> = rmt::sample_gaussian(10, 10, 1.0, 1).unwrap();
        assert!(detect_traps(&g, &[]).is_err());
    }

    #[test]
    fn outcome_independent_of_permutation_seed() {
        let mut w: WeightMatrix<f64> = rmt::sample_gaussian(200, 200, 0.1, 8).unwrap();
        w.values[(0, 0)] = 5.0;
        for s in [3u64, 99, 12345] {
            assert!(detect_traps(&w, &[s]).unwrap().has_trap);
        }
    }
}
