//! Whole-model analysis: per-layer reports, layer averages, CSV rows and
//! plot-ready data.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::erg::{self, DetxPoint, EcsGap, ErgResult};
use crate::error::{Error, Result};
use crate::metrics::{self, AverageMode, LayerMetrics, MIN_AVERAGED_M};
use crate::plfit::{self, PowerLawFit, ScanPoint, UniversalityClass};
use crate::quality::{self, QualityModel, QualityReport, SeriesScaling};
use crate::spectral::{self, eigenspectrum, Spectrum};
use crate::tensor_io::{sanitize_file_stem, Normalization, WeightMatrix};
use crate::traps::{self, TrapReport, DEFAULT_TRAP_SEEDS};

pub const SCHEMA_VERSION: &str = "1.0.0";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Layer-local conditions recorded in [`LayerReport::warnings`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarningCode {
    DegenerateLayer,
    FitSkipped,
    InfiniteAlpha,
    PoorFit,
    RankCollapse,
    SmallLayer,
    RandDistanceFailed,
    DetxFailed,
    DetxNotCrossed,
    TrapDetected,
    TrapHeavyTailCaveat,
    TrapsFailed,
    NoEcsTail,
    QualitySkipped,
}

impl WarningCode {
    pub const ALL: [WarningCode; 14] = [
        WarningCode::DegenerateLayer,
        WarningCode::FitSkipped,
        WarningCode::InfiniteAlpha,
        WarningCode::PoorFit,
        WarningCode::RankCollapse,
        WarningCode::SmallLayer,
        WarningCode::RandDistanceFailed,
        WarningCode::DetxFailed,
        WarningCode::DetxNotCrossed,
        WarningCode::TrapDetected,
        WarningCode::TrapHeavyTailCaveat,
        WarningCode::TrapsFailed,
        WarningCode::NoEcsTail,
        WarningCode::QualitySkipped,
    ];

    pub fn code(self) -> &'static str {
        match self {
            WarningCode::DegenerateLayer => "degenerate-layer",
            WarningCode::FitSkipped => "fit-skipped",
            WarningCode::InfiniteAlpha => "infinite-alpha",
            WarningCode::PoorFit => "poor-fit",
            WarningCode::RankCollapse => "rank-collapse",
            WarningCode::SmallLayer => "small-layer",
            WarningCode::RandDistanceFailed => "rand-distance-failed",
            WarningCode::DetxFailed => "detx-failed",
            WarningCode::DetxNotCrossed => "detx-not-crossed",
            WarningCode::TrapDetected => "trap-detected",
            WarningCode::TrapHeavyTailCaveat => "trap-heavy-tail-caveat",
            WarningCode::TrapsFailed => "traps-failed",
            WarningCode::NoEcsTail => "no-ecs-tail",
            WarningCode::QualitySkipped => "quality-skipped",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            WarningCode::DegenerateLayer => "all-zero layer; every metric is null",
            WarningCode::FitSkipped => "fewer positive eigenvalues than --min-evals; no power-law fit",
            WarningCode::InfiniteAlpha => "every tail candidate is constant; no finite exponent",
            WarningCode::PoorFit => "KS distance above the good-fit threshold; alpha is unreliable",
            WarningCode::RankCollapse => "Q > 1 and more than 10% zero eigenvalues",
            WarningCode::SmallLayer => "M below 8; excluded from model averages",
            WarningCode::RandDistanceFailed => "rand-distance could not be computed",
            WarningCode::DetxFailed => "detx scan failed; ERG fields are null",
            WarningCode::DetxNotCrossed => "cumulative log never changes sign; no unit-product tail",
            WarningCode::TrapDetected => "randomized spectrum has spikes above the MP edge in half the seeds or more",
            WarningCode::TrapHeavyTailCaveat => "randomized spectrum is itself heavy tailed; MP null unreliable",
            WarningCode::TrapsFailed => "trap detection failed; trap fields are null",
            WarningCode::NoEcsTail => "no tail available for quality estimates",
            WarningCode::QualitySkipped => "a requested quality model is undefined for this layer",
        }
    }
}

impl std::fmt::Display for WarningCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// Analysis options; echoed into the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeConfig {
    /// Normalization of the spectrum that is fitted and summarized.
    pub normalization: Normalization,
    /// Run the detx scan (always on the trace-m spectrum).
    pub detx: bool,
    /// Trap randomizations per layer; 0 disables trap detection.
    pub randomize: usize,
    pub quality: Vec<QualityModel>,
    pub series_scaling: SeriesScaling,
    pub seed: u64,
    pub min_evals: usize,
    #[serde(skip)]
    pub plot_data: bool,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            normalization: Normalization::None,
            detx: false,
            randomize: DEFAULT_TRAP_SEEDS,
            quality: Vec::new(),
            series_scaling: SeriesScaling::PerTail,
            seed: 0,
            min_evals: plfit::MIN_FIT_EIGENVALUES,
            plot_data: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumSummary {
    pub n: usize,
    pub m: usize,
    pub q: f64,
    pub normalization: Normalization,
    pub lambda_max: Option<f64>,
    pub lambda_min_positive: Option<f64>,
    pub zero_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerSeeds {
    pub rand_distance: u64,
    pub traps: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerReport {
    pub name: String,
    pub index: usize,
    pub spectrum: SpectrumSummary,
    pub fit: Option<PowerLawFit<f64>>,
    pub metrics: LayerMetrics<f64>,
    pub erg: Option<ErgResult<f64>>,
    pub ecs_gap: Option<EcsGap<f64>>,
    pub traps: Option<TrapReport<f64>>,
    pub quality: BTreeMap<&'static str, QualityReport<f64>>,
    pub seeds: LayerSeeds,
    pub warnings: Vec<WarningCode>,
    #[serde(skip)]
    pub plot: Option<LayerPlotData>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerAverages {
    pub alpha: Option<f64>,
    pub alpha_hat: Option<f64>,
    pub log_spectral_norm: Option<f64>,
    pub layers_averaged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelReport {
    pub schema_version: &'static str,
    pub tool_version: &'static str,
    pub config: AnalyzeConfig,
    pub averages: LayerAverages,
    pub layers: Vec<LayerReport>,
}

/// One histogram bin in eigenvalue units, with the fitted power-law density
/// (per unit `ln λ`, scaled by the tail fraction) at the bin's geometric centre.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramRow {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub count: usize,
    pub density: f64,
    pub pl_density: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerPlotData {
    pub xmin_scan: Vec<ScanPoint<f64>>,
    pub detx_curve: Vec<DetxPoint<f64>>,
    pub histogram: Vec<HistogramRow>,
}

/// Per-purpose seed for layer `index`, fixed by the base seed.
pub fn derive_seed(base: u64, index: usize, purpose: u64) -> u64 {
    // splitmix64 finalizer over the mixed inputs
    let mut z = base
        .wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(purpose.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn layer_seeds(cfg: &AnalyzeConfig, index: usize) -> LayerSeeds {
    LayerSeeds {
        rand_distance: derive_seed(cfg.seed, index, 0),
        traps: (0..cfg.randomize).map(|k| derive_seed(cfg.seed, index, 1 + k as u64)).collect(),
    }
}

/// Keeps data errors as a warning and lets numeric failures through.
fn soft<T>(r: Result<T>, warnings: &mut Vec<WarningCode>, code: WarningCode) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_data_error() => {
            warnings.push(code);
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn histogram_rows(s: &Spectrum<f64>, fit: Option<&PowerLawFit<f64>>) -> Result<Vec<HistogramRow>> {
    let h = spectral::log_histogram(s, spectral::DEFAULT_JSD_BINS, None)?;
    let total = h.total_mass;
    Ok((0..h.bins())
        .map(|i| {
            let (lo, hi) = (h.bin_edges[i].exp(), h.bin_edges[i + 1].exp());
            let centre = (0.5 * (h.bin_edges[i] + h.bin_edges[i + 1])).exp();
            let pl_density = fit.filter(|f| centre >= f.xmin).map(|f| {
                let frac = f.tail_count as f64 / total;
                frac * (f.alpha - 1.0) * (centre / f.xmin).powf(1.0 - f.alpha)
            });
            HistogramRow {
                lambda_lo: lo,
                lambda_hi: hi,
                count: h.counts[i],
                density: h.densities[i] / total,
                pl_density,
            }
        })
        .collect())
}

fn analyze_layer(index: usize, w: &WeightMatrix<f64>, cfg: &AnalyzeConfig) -> Result<LayerReport> {
    let mut warnings = Vec::new();
    let seeds = layer_seeds(cfg, index);
    let base = eigenspectrum(w)?;
    let spec = match cfg.normalization {
        Normalization::None => Some(base.clone()),
        Normalization::TraceM => soft(base.trace_normalized(), &mut warnings, WarningCode::DegenerateLayer)?,
    };
    let summary = SpectrumSummary {
        n: w.n(),
        m: w.m(),
        q: w.q(),
        normalization: cfg.normalization,
        lambda_max: spec.as_ref().and_then(|s| finite(s.lambda_max()).filter(|&x| x > 0.0)),
        lambda_min_positive: spec.as_ref().and_then(|s| s.lambda_min_positive()),
        zero_count: base.zero_count(),
    };
    let mut report = LayerReport {
        name: w.name.clone(),
        index,
        spectrum: summary,
        fit: None,
        metrics: LayerMetrics {
            alpha: None,
            log_spectral_norm: None,
            alpha_hat: None,
            d_ks: None,
            rand_distance: None,
            universality: UniversalityClass::RandomLike,
        },
        erg: None,
        ecs_gap: None,
        traps: None,
        quality: BTreeMap::new(),
        seeds,
        warnings: Vec::new(),
        plot: None,
    };
    if w.m() < MIN_AVERAGED_M {
        warnings.push(WarningCode::SmallLayer);
    }
    let spec = match spec {
        Some(s) if s.lambda_max() > 0.0 => s,
        _ => {
            if !warnings.contains(&WarningCode::DegenerateLayer) {
                warnings.push(WarningCode::DegenerateLayer);
            }
            report.warnings = warnings;
            return Ok(report);
        }
    };

    // power-law fit and HTSR metrics
    let fit = match plfit::fit_pl_with(&spec, cfg.min_evals) {
        Ok(f) => Some(f),
        Err(Error::InfiniteAlpha) => {
            warnings.push(WarningCode::InfiniteAlpha);
            None
        }
        Err(e) if e.is_data_error() => {
            warnings.push(WarningCode::FitSkipped);
            None
        }
        Err(e) => return Err(e),
    };
    let fit_ok = fit.as_ref().is_some_and(|f| f.is_good());
    if fit.is_some() && !fit_ok {
        warnings.push(WarningCode::PoorFit);
    }
    let alpha = fit.as_ref().map(|f| f.alpha);
    let universality = plfit::classify(alpha.unwrap_or(f64::NAN), fit_ok, &spec);
    if universality == UniversalityClass::RankCollapse {
        warnings.push(WarningCode::RankCollapse);
    }
    let lmax = spec.lambda_max();
    report.metrics = LayerMetrics {
        alpha,
        log_spectral_norm: Some(lmax.log10()),
        alpha_hat: alpha.and_then(|a| metrics::alpha_hat(a, lmax).ok()),
        d_ks: fit.as_ref().map(|f| f.d_ks),
        rand_distance: soft(
            metrics::rand_distance(w, report.seeds.rand_distance),
            &mut warnings,
            WarningCode::RandDistanceFailed,
        )?,
        universality,
    };

    // detx runs on the trace-m spectrum; the gap refits there when needed
    let mut tm_tail: Option<Vec<f64>> = None;
    if cfg.detx {
        let tm = match spec.normalization {
            Normalization::TraceM => Some(spec.clone()),
            Normalization::None => soft(spec.trace_normalized(), &mut warnings, WarningCode::DetxFailed)?,
        };
        if let Some(tm) = tm {
            if let Some(e) = soft(erg::detx_lambda_min(&tm), &mut warnings, WarningCode::DetxFailed)? {
                if !e.crossed {
                    warnings.push(WarningCode::DetxNotCrossed);
                }
                let tm_fit = match (&fit, cfg.normalization) {
                    (Some(f), Normalization::TraceM) => Some(f.clone()),
                    (Some(_), Normalization::None) => plfit::fit_pl_with(&tm, cfg.min_evals).ok(),
                    (None, _) => None,
                };
                if let Some(tf) = tm_fit {
                    report.ecs_gap = Some(erg::delta_lambda_min(&tf, &e)?);
                }
                tm_tail = Some(tm.eigenvalues[tm.len() - e.tail_count..].to_vec());
                report.erg = Some(e);
            }
        }
    }

    if cfg.randomize > 0 {
        if let Some(t) = soft(traps::detect_traps(w, &report.seeds.traps), &mut warnings, WarningCode::TrapsFailed)? {
            if t.has_trap {
                warnings.push(WarningCode::TrapDetected);
            }
            if t.heavy_tail_caveat {
                warnings.push(WarningCode::TrapHeavyTailCaveat);
            }
            report.traps = Some(t);
        }
    }

    if !cfg.quality.is_empty() {
        let tail = tm_tail.or_else(|| fit.as_ref().map(|f| spec.eigenvalues[spec.len() - f.tail_count..].to_vec()));
        match tail {
            None => warnings.push(WarningCode::NoEcsTail),
            Some(tail) => {
                let mut skipped = false;
                for &model in &cfg.quality {
                    let r = quality_for(model, &tail, alpha, cfg.series_scaling);
                    match soft(r, &mut warnings, WarningCode::QualitySkipped)? {
                        Some(Some(q)) => {
                            report.quality.insert(model.id(), q);
                        }
                        Some(None) => skipped = true,
                        None => {}
                    }
                }
                if skipped {
                    warnings.push(WarningCode::QualitySkipped);
                }
            }
        }
    }

    if cfg.plot_data {
        report.plot = Some(LayerPlotData {
            xmin_scan: fit.as_ref().map(|f| f.scan.clone()).unwrap_or_default(),
            detx_curve: report.erg.as_ref().map(|e| e.curve.clone()).unwrap_or_default(),
            histogram: histogram_rows(&spec, fit.as_ref())?,
        });
    }
    report.fit = fit;
    warnings.sort();
    warnings.dedup();
    report.warnings = warnings;
    Ok(report)
}

/// `Ok(None)` when the model needs an exponent the layer does not provide.
fn quality_for(
    model: QualityModel,
    tail: &[f64],
    alpha: Option<f64>,
    scaling: SeriesScaling,
) -> Result<Option<QualityReport<f64>>> {
    let lmin = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let lmax = tail.iter().copied().fold(0.0, f64::max);
    Ok(match (model, alpha) {
        (QualityModel::Discrete, _) => Some(quality::q2_discrete(tail)),
        (QualityModel::CumulantSeries, _) => Some(quality::q2_cumulant_series(tail, tail.len(), scaling)?),
        (_, None) => None,
        (QualityModel::FreeCauchy, Some(a)) => Some(quality::q2_free_cauchy(tail, a)?),
        (QualityModel::InverseMp, Some(a)) => Some(quality::q2_imp(a / 2.0, tail, lmin)?),
        (QualityModel::LevyWigner, Some(a)) if a > 1.0 && a <= 2.0 => {
            Some(quality::q2_levy_wigner(a, lmax, tail.len())?)
        }
        (QualityModel::LevyWigner, Some(_)) => None,
    })
}

fn average_of(layers: &[&LayerReport], get: impl Fn(&LayerReport) -> Option<f64>) -> Result<Option<f64>> {
    let vals: Vec<f64> = layers.iter().filter_map(|l| get(l)).collect();
    if vals.is_empty() {
        return Ok(None);
    }
    metrics::model_average(&vals, AverageMode::Mean).map(Some)
}

/// Analyzes every layer in parallel; output order follows `layers`.
pub fn analyze(layers: &[WeightMatrix<f64>], cfg: &AnalyzeConfig) -> Result<ModelReport> {
    if layers.is_empty() {
        return Err(Error::Format("bundle contains no layers".into()));
    }
    let reports = layers.par_iter().enumerate().map(|(i, w)| analyze_layer(i, w, cfg)).collect::<Result<Vec<_>>>()?;
    let eligible: Vec<&LayerReport> = reports.iter().filter(|r| r.spectrum.m >= MIN_AVERAGED_M).collect();
    let averages = LayerAverages {
        alpha: average_of(&eligible, |l| l.metrics.alpha)?,
        alpha_hat: average_of(&eligible, |l| l.metrics.alpha_hat)?,
        log_spectral_norm: average_of(&eligible, |l| l.metrics.log_spectral_norm)?,
        layers_averaged: eligible.len(),
    };
    Ok(ModelReport {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION,
        config: cfg.clone(),
        averages,
        layers: reports,
    })
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    name: &'a str,
    n: usize,
    m: usize,
    q: f64,
    normalization: Normalization,
    lambda_max: Option<f64>,
    lambda_min_positive: Option<f64>,
    zero_count: usize,
    alpha: Option<f64>,
    xmin: Option<f64>,
    d_ks: Option<f64>,
    tail_count: Option<usize>,
    alpha_hat: Option<f64>,
    log_spectral_norm: Option<f64>,
    rand_distance: Option<f64>,
    universality: UniversalityClass,
    lambda_min_detx: Option<f64>,
    detx_crossed: Option<bool>,
    delta_lambda_min: Option<f64>,
    has_trap: Option<bool>,
    trap_detection_fraction: Option<f64>,
    q2_discrete: Option<f64>,
    q2_fc: Option<f64>,
    q2_imp: Option<f64>,
    q2_lw: Option<f64>,
    q2_cumulant: Option<f64>,
    warnings: String,
}

/// One CSV row per layer, with a header.
pub fn write_csv<W: Write>(report: &ModelReport, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for l in &report.layers {
        let q2 = |m: QualityModel| l.quality.get(m.id()).map(|r| r.q2);
        wtr.serialize(CsvRow {
            name: &l.name,
            n: l.spectrum.n,
            m: l.spectrum.m,
            q: l.spectrum.q,
            normalization: l.spectrum.normalization,
            lambda_max: l.spectrum.lambda_max,
            lambda_min_positive: l.spectrum.lambda_min_positive,
            zero_count: l.spectrum.zero_count,
            alpha: l.metrics.alpha,
            xmin: l.fit.as_ref().map(|f| f.xmin),
            d_ks: l.metrics.d_ks,
            tail_count: l.fit.as_ref().map(|f| f.tail_count),
            alpha_hat: l.metrics.alpha_hat,
            log_spectral_norm: l.metrics.log_spectral_norm,
            rand_distance: l.metrics.rand_distance,
            universality: l.metrics.universality,
            lambda_min_detx: l.erg.as_ref().map(|e| e.lambda_min_detx),
            detx_crossed: l.erg.as_ref().map(|e| e.crossed),
            delta_lambda_min: l.ecs_gap.map(|g| g.delta_lambda_min),
            has_trap: l.traps.as_ref().map(|t| t.has_trap),
            trap_detection_fraction: l.traps.as_ref().map(|t| t.detection_fraction),
            q2_discrete: q2(QualityModel::Discrete),
            q2_fc: q2(QualityModel::FreeCauchy),
            q2_imp: q2(QualityModel::InverseMp),
            q2_lw: q2(QualityModel::LevyWigner),
            q2_cumulant: q2(QualityModel::CumulantSeries),
            warnings: l.warnings.iter().map(|w| w.code()).collect::<Vec<_>>().join(";"),
        })?;
    }
    wtr.flush()?;
    Ok(())
}

fn write_rows<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct DetxRow {
    k: usize,
    lambda: f64,
    cumulative_log: f64,
}

/// Writes `<index>_<layer>_{xmin_scan,detx,histogram}.csv` for each layer
/// that carries plot data. Returns the files written.
pub fn write_plot_data(report: &ModelReport, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for l in &report.layers {
        let Some(plot) = &l.plot else { continue };
        let stem = format!("{:03}_{}", l.index, sanitize_file_stem(&l.name));
        if !plot.xmin_scan.is_empty() {
            let p = dir.join(format!("{stem}_xmin_scan.csv"));
            write_rows(&p, &plot.xmin_scan)?;
            written.push(p);
        }
        if !plot.detx_curve.is_empty() {
            let rows: Vec<DetxRow> = plot
                .detx_curve
                .iter()
                .enumerate()
                .map(|(k, pt)| DetxRow { k: k + 1, lambda: pt.lambda, cumulative_log: pt.cumulative_log })
                .collect();
            let p = dir.join(format!("{stem}_detx.csv"));
            write_rows(&p, &rows)?;
            written.push(p);
        }
        let p = dir.join(format!("{stem}_histogram.csv"));
        write_rows(&p, &plot.histogram)?;
        written.push(p);
    }
    Ok(written)
}
