//! Command implementations behind the `esdiag` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use esdiag::quality::{QualityModel, SeriesScaling};
use esdiag::report::{self, AnalyzeConfig, ModelReport, WarningCode};
use esdiag::reproduce;
use esdiag::rmt::{self, ParetoSigns};
use esdiag::tensor_io;
use esdiag::{Normalization, WeightMatrixF64};
use serde::Serialize;
use sha2::{Digest, Sha256};

const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "esdiag", version, about = "Data-free spectral diagnostics of weight matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Analyze every layer of a weight bundle
    #[command(after_help = warning_help())]
    Analyze(AnalyzeArgs),
    /// Write a synthetic single-layer bundle
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
    /// Run a synthetic sweep and write its CSV
    Reproduce(ReproduceArgs),
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Bundle directory containing manifest.json
    pub bundle: PathBuf,
    /// Output directory for report.json / report.csv
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Normalization of the fitted spectrum (detx always uses trace-m)
    #[arg(long, default_value = "none", value_parser = ["none", "trace-m"])]
    pub normalize: String,
    /// Run the detx (trace-log) tail scan
    #[arg(long)]
    pub detx: bool,
    /// Trap-detection randomizations per layer (0 disables)
    #[arg(long, default_value_t = esdiag::traps::DEFAULT_TRAP_SEEDS)]
    pub randomize: usize,
    /// Quality models: discrete, fc, imp, lw, cumulant or all (repeatable, comma separated)
    #[arg(long, value_delimiter = ',')]
    pub quality: Vec<String>,
    /// Cumulant-series argument: per-tail uses λ/M̃, raw uses λ
    #[arg(long, value_enum, default_value_t = Scaling::PerTail)]
    pub series_scaling: Scaling,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Directory for per-layer plot CSVs
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
    #[arg(long, default_value_t = esdiag::plfit::MIN_FIT_EIGENVALUES)]
    pub min_evals: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Scaling {
    PerTail,
    Raw,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Subcommand, Debug)]
pub enum SynthKind {
    /// I.i.d. Gaussian entries
    Gaussian {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        m: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// I.i.d. Pareto(mu, x_m) magnitudes
    Pareto {
        #[arg(long)]
        mu: f64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        m: usize,
        #[arg(long, default_value_t = 1.0)]
        x_m: f64,
        #[arg(long, value_enum, default_value_t = Signs::Positive)]
        signs: Signs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inverse-MP spectrum stored as a diagonal M x M matrix
    Imp {
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value_t = 500)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Signs {
    Positive,
    Symmetric,
}

impl From<Signs> for ParetoSigns {
    fn from(s: Signs) -> Self {
        match s {
            Signs::Positive => ParetoSigns::Positive,
            Signs::Symmetric => ParetoSigns::Symmetric,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Figure {
    AlphaVsMu,
    KappaVsAlpha,
    DetxGap,
}

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub figure: Figure,
    /// Eigenvalues per spectrum (default 500; 1000 for detx-gap)
    #[arg(long)]
    pub m: Option<usize>,
    /// Samples per parameter value (default 3; 10 for kappa-vs-alpha, 20 for detx-gap)
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pareto sign convention for alpha-vs-mu
    #[arg(long, value_enum, default_value_t = Signs::Positive)]
    pub signs: Signs,
    /// CSV destination (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn warning_help() -> String {
    let mut s = String::from("Warning codes (LayerReport.warnings):\n");
    for w in WarningCode::ALL {
        s.push_str(&format!("  {:<24} {}\n", w.code(), w.description()));
    }
    s.push_str("\nExit codes: 0 success, 2 data error, 3 numeric failure");
    s
}

/// On-disk wrapper of `report.json`.
#[derive(Serialize)]
pub struct Envelope<'a> {
    pub schema_version: &'static str,
    pub tool_version: &'static str,
    pub generated_unix: u64,
    pub body_sha256: String,
    pub body: &'a ModelReport,
}

fn parse_quality(raw: &[String]) -> esdiag::Result<Vec<QualityModel>> {
    let mut out = Vec::new();
    for q in raw {
        if q == "all" {
            return Ok(QualityModel::ALL.to_vec());
        }
        let m: QualityModel = q.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

/// SHA-256 of the body as compact JSON with object keys sorted, so a reader
/// can recompute it from the parsed file.
pub fn body_sha256(report: &ModelReport) -> Result<String> {
    let body = serde_json::to_vec(&serde_json::to_value(report)?)?;
    Ok(hex::encode(Sha256::digest(&body)))
}

/// Writes the pretty-printed envelope.
pub fn write_report_json(report: &ModelReport, path: &Path) -> Result<()> {
    let generated_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let env = Envelope {
        schema_version: report::SCHEMA_VERSION,
        tool_version: report::TOOL_VERSION,
        generated_unix,
        body_sha256: body_sha256(report)?,
        body: report,
    };
    let mut text = serde_json::to_string_pretty(&env)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Runs `analyze`, writes the requested outputs and returns the report with
/// the paths written.
pub fn cmd_analyze(args: AnalyzeArgs) -> Result<(ModelReport, Vec<PathBuf>)> {
    let normalization: Normalization = args.normalize.parse()?;
    let cfg = AnalyzeConfig {
        normalization,
        detx: args.detx,
        randomize: args.randomize,
        quality: parse_quality(&args.quality)?,
        series_scaling: match args.series_scaling {
            Scaling::PerTail => SeriesScaling::PerTail,
            Scaling::Raw => SeriesScaling::Raw,
        },
        seed: args.seed,
        min_evals: args.min_evals,
        plot_data: args.plot_data.is_some(),
    };
    let layers: Vec<WeightMatrixF64> = tensor_io::load_bundle(&args.bundle)?;
    let report = report::analyze(&layers, &cfg)?;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let mut written = Vec::new();
    if args.format != Format::Csv {
        let p = args.out.join("report.json");
        write_report_json(&report, &p)?;
        written.push(p);
    }
    if args.format != Format::Json {
        let p = args.out.join("report.csv");
        let f = fs::File::create(&p).with_context(|| format!("cannot create {}", p.display()))?;
        report::write_csv(&report, f)?;
        written.push(p);
    }
    if let Some(dir) = &args.plot_data {
        written.extend(report::write_plot_data(&report, dir)?);
    }
    Ok((report, written))
}

fn print_summary(report: &ModelReport, written: &[PathBuf]) {
    for p in written {
        println!("wrote {}", p.display());
    }
    for l in &report.layers {
        let alpha = l.metrics.alpha.map_or("-".to_string(), |a| format!("{a:.3}"));
        println!("{:<24} M={:<6} alpha={:<8} {:?}", l.name, l.spectrum.m, alpha, l.metrics.universality);
    }
}

pub fn cmd_synth(kind: SynthKind) -> Result<()> {
    let (w, out): (WeightMatrixF64, PathBuf) = match kind {
        SynthKind::Gaussian { n, m, sigma, seed, out } => (rmt::sample_gaussian(n, m, sigma, seed)?, out),
        SynthKind::Pareto { mu, n, m, x_m, signs, seed, out } => {
            (rmt::sample_pareto(n, m, mu, x_m, signs.into(), seed)?, out)
        }
        SynthKind::Imp { q, m, seed, out } => {
            let s = rmt::sample_imp_spectrum::<f64>(m, q, seed)?;
            (rmt::diagonal_realization(&s, "imp"), out)
        }
    };
    tensor_io::write_bundle(&out, &[w])?;
    println!("wrote {}", out.display());
    Ok(())
}

fn write_csv_rows<R: Serialize>(rows: &[R], out: Option<&Path>) -> Result<()> {
    let sink: Box<dyn std::io::Write> = match out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?),
        None => Box::new(std::io::stdout()),
    };
    let mut wtr = csv::Writer::from_writer(sink);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn cmd_reproduce(args: ReproduceArgs) -> Result<()> {
    let out = args.out.as_deref();
    match args.figure {
        Figure::AlphaVsMu => {
            let rows = reproduce::alpha_vs_mu(
                &[1.0, 3.0, 5.0],
                &[1.0, 2.0],
                args.m.unwrap_or(500),
                args.seeds.unwrap_or(3),
                args.seed,
                args.signs.into(),
            )?;
            for (mu, a) in reproduce::group_means(&rows.iter().map(|r| (r.mu, r.alpha)).collect::<Vec<_>>()) {
                eprintln!("mu={mu}: mean alpha {a:.3}");
            }
            write_csv_rows(&rows, out)
        }
        Figure::KappaVsAlpha => {
            let rows = reproduce::kappa_vs_alpha(
                &[0.25, 0.5, 0.75, 1.0],
                args.m.unwrap_or(500),
                args.seeds.unwrap_or(10),
                args.seed,
            )?;
            let means = reproduce::group_means(&rows.iter().map(|r| (r.kappa, r.alpha)).collect::<Vec<_>>());
            eprintln!("slope of mean alpha on kappa: {:.3}", reproduce::ols_slope(&means)?);
            write_csv_rows(&rows, out)
        }
        Figure::DetxGap => {
            let rows = reproduce::detx_gap(args.m.unwrap_or(1000), args.seeds.unwrap_or(20), args.seed)?;
            eprintln!("{} / {} within two spacings", rows.iter().filter(|r| r.within).count(), rows.len());
            write_csv_rows(&rows, out)
        }
    }
}

/// Process exit code for a failed command.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<esdiag::Error>() {
        Some(e) if !e.is_data_error() => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Parses the command line, runs it and maps failures to exit codes.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(a).map(|(r, w)| print_summary(&r, &w)),
        Command::Synth { kind } => cmd_synth(kind),
        Command::Reproduce(r) => cmd_reproduce(r),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
