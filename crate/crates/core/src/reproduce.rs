//! Synthetic sweeps: fitted exponent against the Pareto element exponent,
//! against the inverse-MP `κ`, and the detx gap on constructed ideal layers.

use rayon::prelude::*;
use serde::Serialize;

use crate::erg;
use crate::error::{Error, Result};
use crate::plfit::{self, UniversalityClass};
use crate::rmt::{self, ParetoSigns};
use crate::spectral::{eigenspectrum, Spectrum};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaMuRow {
    pub mu: f64,
    pub q: f64,
    pub seed: u64,
    pub alpha: f64,
    pub xmin: f64,
    pub d_ks: f64,
    pub universality: UniversalityClass,
}

/// Fits the ESD of `N × M` Pareto matrices (`N = round(qM)`) for each
/// `(μ, Q, seed)`, seeds `seed .. seed + seeds`.
pub fn alpha_vs_mu(
    mus: &[f64],
    qs: &[f64],
    m: usize,
    seeds: u64,
    seed: u64,
    signs: ParetoSigns,
) -> Result<Vec<AlphaMuRow>> {
    let mut jobs = Vec::new();
    for &mu in mus {
        for &q in qs {
            for s in 0..seeds {
                jobs.push((mu, q, seed.wrapping_add(s)));
            }
        }
    }
    jobs.par_iter()
        .map(|&(mu, q, s)| {
            let n = (q * m as f64).round() as usize;
            let w = rmt::sample_pareto::<f64>(n, m, mu, 1.0, signs, s)?;
            let spec = eigenspectrum(&w)?;
            let fit = plfit::fit_pl(&spec)?;
            Ok(AlphaMuRow {
                mu,
                q,
                seed: s,
                alpha: fit.alpha,
                xmin: fit.xmin,
                d_ks: fit.d_ks,
                universality: plfit::classify(fit.alpha, fit.is_good(), &spec),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaAlphaRow {
    pub kappa: f64,
    pub q: f64,
    pub seed: u64,
    pub alpha: f64,
    pub d_ks: f64,
}

/// Fits inverse-MP spectra with `Q = 2κ + 1`.
pub fn kappa_vs_alpha(kappas: &[f64], m: usize, seeds: u64, seed: u64) -> Result<Vec<KappaAlphaRow>> {
    let jobs: Vec<(f64, u64)> =
        kappas.iter().flat_map(|&k| (0..seeds).map(move |s| (k, seed.wrapping_add(s)))).collect();
    jobs.par_iter()
        .map(|&(kappa, s)| {
            let q = 2.0 * kappa + 1.0;
            let spec = rmt::sample_imp_spectrum::<f64>(m, q, s)?;
            let fit = plfit::fit_pl(&spec)?;
            Ok(KappaAlphaRow { kappa, q, seed: s, alpha: fit.alpha, d_ks: fit.d_ks })
        })
        .collect()
}

/// Mean of `y` per distinct `x`, in first-seen order.
pub fn group_means(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64, usize)> = Vec::new();
    for &(x, y) in points {
        match out.iter_mut().find(|g| g.0 == x) {
            Some(g) => {
                g.1 += y;
                g.2 += 1;
            }
            None => out.push((x, y, 1)),
        }
    }
    out.into_iter().map(|(x, s, n)| (x, s / n as f64)).collect()
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(points: &[(f64, f64)]) -> Result<f64> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return Err(Error::Domain("a slope needs at least two points".into()));
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("a slope needs distinct x values".into()));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(sxy / sxx)
}

/// MP bulk below an `α = 2` quantile tail whose log-sum is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealLayer {
    pub spectrum: Spectrum<f64>,
    /// Ascending index of the first tail eigenvalue.
    pub tail_start: usize,
}

/// Builds an ideal layer of `m` eigenvalues with `m / 10` tail values at the
/// quantiles `x_i = 1 / (1 − (i − ½)/n)`, rescaled to geometric mean 1, over
/// a `Q = 1` MP bulk whose upper edge sits at 0.9 of the smallest tail value.
pub fn ideal_layer(m: usize, seed: u64) -> Result<IdealLayer> {
    let n = m / 10;
    if n < plfit::MIN_TAIL || m - n < 2 {
        return Err(Error::Domain(format!("ideal layer needs m >= {}, got {m}", 10 * plfit::MIN_TAIL)));
    }
    let mut tail: Vec<f64> = (1..=n).map(|i| 1.0 / (1.0 - (i as f64 - 0.5) / n as f64)).collect();
    let gm = (tail.iter().map(|x| x.ln()).sum::<f64>() / n as f64).exp();
    for x in &mut tail {
        *x /= gm;
    }
    let bulk = rmt::sample_mp_spectrum::<f64>(m - n, 1.0, 1.0, seed)?;
    // MP edge for Q = 1, σ² = 1 is 4
    let c = 0.9 * tail[0] / 4.0;
    let mut eig: Vec<f64> = bulk.eigenvalues.iter().map(|x| x * c).collect();
    eig.extend_from_slice(&tail);
    Ok(IdealLayer { spectrum: Spectrum::synthetic(eig, format!("ideal-{seed}"))?, tail_start: m - n })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetxGapRow {
    pub seed: u64,
    pub m: usize,
    pub tail_size: usize,
    pub alpha: f64,
    pub lambda_min_pl: f64,
    pub lambda_min_detx: f64,
    pub delta_lambda_min: f64,
    /// Two eigenvalue spacings at the tail start.
    pub tolerance: f64,
    pub within: bool,
}

fn gap_row(m: usize, seed: u64) -> Result<DetxGapRow> {
    let layer = ideal_layer(m, seed)?;
    let s = &layer.spectrum;
    let b = layer.tail_start;
    let fit = plfit::fit_pl(s)?;
    let e = erg::detx_lambda_min(s)?;
    let gap = erg::delta_lambda_min(&fit, &e)?.delta_lambda_min;
    let ev = &s.eigenvalues;
    let above = ev[(b + 2).min(ev.len() - 1)] - ev[b];
    let below = ev[b] - ev[b.saturating_sub(2)];
    let tolerance = above.max(below);
    Ok(DetxGapRow {
        seed,
        m,
        tail_size: m - b,
        alpha: fit.alpha,
        lambda_min_pl: fit.xmin,
        lambda_min_detx: e.lambda_min_detx,
        delta_lambda_min: gap,
        tolerance,
        within: gap.abs() <= tolerance,
    })
}

/// Δλ_min on `constructions` ideal layers with seeds `seed ..`.
pub fn detx_gap(m: usize, constructions: u64, seed: u64) -> Result<Vec<DetxGapRow>> {
    (0..constructions).into_par_iter().map(|i| gap_row(m, seed.wrapping_add(i))).collect()
}
