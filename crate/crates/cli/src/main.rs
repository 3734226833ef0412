//! `mfdxa` command-line front end.
//!
//! Exit codes: 0 success, 1 some series or pairs failed (see failures.csv),
//! 2 configuration or I/O error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mfdxa::generators::{generate, GeneratorKind, GeneratorSpec};
use mfdxa::mutual_info::gcc_group_stats;
use mfdxa::output::{write_group_stats, write_outputs};
use mfdxa::panel::{MissingPolicy, Panel};
use mfdxa::pipeline::{analyze_panel, load_configured_panel, parse_q_grid, PairFilter, RunConfig, ScaleSpec, Stages};
use mfdxa::MarketClass;

#[derive(Parser)]
#[command(
    name = "mfdxa",
    version,
    about = "Multifractal detrended cross-correlation analysis of panels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single-series and pairwise analysis with all reports.
    Analyze(RunArgs),
    /// Mutual information and GCC for pairs only.
    Mi(RunArgs),
    /// GCC group statistics from an existing mi.csv.
    Report(ReportArgs),
    /// Write a synthetic panel in the input CSV schema.
    Generate(GenerateArgs),
}

#[derive(Args, Default)]
struct RunArgs {
    /// Panel CSV: `date` column followed by one column per series.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sidecar CSV with columns id,label,class.
    #[arg(long)]
    metadata: Option<PathBuf>,
    /// key = value settings file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `default`, `min:max:count` (geometric) or a comma-separated list.
    #[arg(long)]
    scales: Option<String>,
    /// Comma-separated moments, or `default`.
    #[arg(long, allow_hyphen_values = true)]
    q_grid: Option<String>,
    /// Detrending polynomial order (0-3).
    #[arg(long)]
    order: Option<usize>,
    /// Equiquantization cells per margin.
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    surrogates: Option<usize>,
    #[arg(long)]
    significance: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Analyse natural logarithms of the input values.
    #[arg(long)]
    log_transform: bool,
    /// `all`, `none`, or `a:b,c:d`.
    #[arg(long)]
    pairs: Option<String>,
    /// Missing-data policy: ffill or drop.
    #[arg(long)]
    missing: Option<String>,
    /// Fit window `lo:hi` in samples.
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    crossover_threshold: Option<f64>,
    /// Also write per-pair fluctuation curves and per-scale DCCA values.
    #[arg(long)]
    pair_details: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// mi.csv from a previous run.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    /// fgn, fbm, cascade, pair or sine.
    #[arg(long)]
    kind: String,
    /// Hurst exponents (comma-separated); one group of series per value.
    #[arg(long, default_value = "0.5")]
    hurst: String,
    /// Cascade multiplier in (0.5, 1).
    #[arg(long, default_value_t = 0.75)]
    a: f64,
    /// Randomize which cascade child receives the larger multiplier.
    #[arg(long)]
    shuffle: bool,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 100.0)]
    period: f64,
    /// Power of two, at least 256.
    #[arg(long, default_value_t = 4096)]
    length: usize,
    /// Series (or pairs) per parameter value.
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep only the first `trim` observations of each series.
    #[arg(long)]
    trim: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

/// Flat `key = value` settings; TOML strings, numbers and booleans.
fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let table: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
    table
        .into_iter()
        .map(|(k, v)| {
            let v = match v {
                toml::Value::String(s) => s,
                toml::Value::Integer(i) => i.to_string(),
                toml::Value::Float(f) => f.to_string(),
                toml::Value::Boolean(b) => b.to_string(),
                other => bail!("{}: unsupported value for {k}: {other}", path.display()),
            };
            Ok((k.replace('-', "_"), v))
        })
        .collect()
}

struct Settings {
    flags: BTreeMap<&'static str, Option<String>>,
    file: BTreeMap<String, String>,
}

impl Settings {
    fn get(&self, key: &str) -> Option<&str> {
        self.flags
            .get(key)
            .and_then(|v| v.as_deref())
            .or_else(|| self.file.get(key).map(String::as_str))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("invalid {key} {v:?}: {e}")))
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<bool> {
        Ok(self.parse::<bool>(key)?.unwrap_or(false))
    }
}

const KNOWN_KEYS: &[&str] = &[
    "input",
    "out",
    "metadata",
    "scales",
    "q_grid",
    "order",
    "bins",
    "surrogates",
    "significance",
    "seed",
    "log_transform",
    "pairs",
    "missing",
    "window",
    "crossover_threshold",
    "pair_details",
    "threads",
];

fn settings(args: &RunArgs) -> Result<Settings> {
    let file = match &args.config {
        Some(p) => read_config_file(p)?,
        None => BTreeMap::new(),
    };
    if let Some(unknown) = file.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        bail!("unknown configuration key {unknown:?}");
    }
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let show = |v: Option<String>| v;
    let flags = BTreeMap::from([
        ("input", path(&args.input)),
        ("out", path(&args.out)),
        ("metadata", path(&args.metadata)),
        ("scales", args.scales.clone()),
        ("q_grid", args.q_grid.clone()),
        ("order", args.order.map(|v| v.to_string())),
        ("bins", args.bins.map(|v| v.to_string())),
        ("surrogates", args.surrogates.map(|v| v.to_string())),
        ("significance", args.significance.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("log_transform", show(args.log_transform.then(|| "true".into()))),
        ("pairs", args.pairs.clone()),
        ("missing", args.missing.clone()),
        ("window", args.window.clone()),
        ("crossover_threshold", args.crossover_threshold.map(|v| v.to_string())),
        ("pair_details", show(args.pair_details.then(|| "true".into()))),
        ("threads", args.threads.map(|v| v.to_string())),
    ]);
    Ok(Settings { flags, file })
}

fn parse_window(s: &str) -> Result<(usize, usize)> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("window {s:?} is not of the form lo:hi"))?;
    let (lo, hi) = (lo.trim().parse()?, hi.trim().parse()?);
    if lo >= hi {
        bail!("window {s:?} is empty");
    }
    Ok((lo, hi))
}

fn run_config(s: &Settings, stages: Stages) -> Result<(RunConfig, PathBuf)> {
    let defaults = RunConfig::default();
    let input = s.get("input").ok_or_else(|| anyhow!("--input is required"))?;
    let out = s.get("out").ok_or_else(|| anyhow!("--out is required"))?;
    let config = RunConfig {
        input: PathBuf::from(input),
        metadata: s.get("metadata").map(PathBuf::from),
        scales: s.parse::<ScaleSpec>("scales")?.unwrap_or(defaults.scales),
        q_grid: match s.get("q_grid") {
            Some(q) => parse_q_grid(q)?.values().to_vec(),
            None => defaults.q_grid,
        },
        order: s.parse("order")?.unwrap_or(defaults.order),
        bins: s.parse("bins")?,
        surrogates: s.parse("surrogates")?.unwrap_or(defaults.surrogates),
        significance: s.parse("significance")?.unwrap_or(defaults.significance),
        seed: s.parse("seed")?.unwrap_or(defaults.seed),
        missing: s.parse::<MissingPolicy>("missing")?.unwrap_or(defaults.missing),
        log_transform: s.flag("log_transform")?,
        pairs: s.parse::<PairFilter>("pairs")?.unwrap_or(defaults.pairs),
        window: s.get("window").map(parse_window).transpose()?,
        crossover_threshold: s.parse("crossover_threshold")?.unwrap_or(defaults.crossover_threshold),
        pair_details: s.flag("pair_details")?,
        stages,
    };
    Ok((config, PathBuf::from(out)))
}

/// Returns whether any series or pair failed.
fn run(args: &RunArgs, stages: Stages) -> Result<bool> {
    let s = settings(args)?;
    if let Some(n) = s.parse::<usize>("threads")? {
        if let Err(e) = set_threads(n) {
            log::warn!("{e}");
        }
    }
    let (config, out) = run_config(&s, stages)?;
    let panel = load_configured_panel(&config)?;
    log::info!("loaded {} series x {} observations", panel.series().len(), panel.len());
    let results = analyze_panel(&panel, &config)?;
    let files = write_outputs(&results, &out)?;
    for f in &files {
        log::info!("wrote {}", f.display());
    }
    for f in &results.failures {
        log::warn!("{} {}/{}: {}", f.stage, f.id_x, f.id_y, f.message);
    }
    Ok(!results.failures.is_empty())
}

#[cfg(feature = "parallel")]
fn set_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| anyhow!("cannot size the worker pool: {e}"))
}

#[cfg(not(feature = "parallel"))]
fn set_threads(_: usize) -> Result<()> {
    Ok(())
}

#[derive(serde::Deserialize)]
struct MiRow {
    class_x: MarketClass,
    class_y: MarketClass,
    lambda: f64,
}

fn report(args: &ReportArgs) -> Result<()> {
    let mut reader =
        csv::Reader::from_path(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let entries = reader
        .deserialize::<MiRow>()
        .map(|r| r.map(|r| (r.class_x, r.class_y, r.lambda)))
        .collect::<std::result::Result<Vec<_>, _>>()
        .with_context(|| format!("parsing {}", args.input.display()))?;
    let table = gcc_group_stats(&entries);
    for w in &table.warnings {
        log::warn!("{w}");
    }
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let path = write_group_stats(&table, &args.out)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn generate_panel(args: &GenerateArgs) -> Result<()> {
    let hursts = args
        .hurst
        .split(',')
        .map(|h| {
            h.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("invalid Hurst exponent {h:?}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let kinds: Vec<GeneratorKind> = match args.kind.as_str() {
        "fgn" => hursts.iter().map(|&hurst| GeneratorKind::Fgn { hurst }).collect(),
        "fbm" => hursts.iter().map(|&hurst| GeneratorKind::Fbm { hurst }).collect(),
        "cascade" => vec![GeneratorKind::BinomialCascade {
            a: args.a,
            shuffle: args.shuffle,
        }],
        "pair" => vec![GeneratorKind::CorrelatedGaussianPair { rho: args.rho }],
        "sine" => hursts
            .iter()
            .map(|&hurst| GeneratorKind::SinusoidPlusNoise {
                amplitude: args.amplitude,
                period: args.period,
                hurst,
            })
            .collect(),
        other => bail!("unknown generator kind {other:?}"),
    };
    let mut series = Vec::new();
    for kind in kinds {
        for k in 0..args.count {
            let spec = GeneratorSpec {
                kind,
                length: args.length,
                seed: args.seed + k as u64,
            };
            for s in generate(&spec)?.into_series() {
                series.push(match args.trim {
                    Some(n) if n < s.len() => mfdxa::Series::new(s.id.clone(), s.values()[..n].to_vec())?,
                    _ => s,
                });
            }
        }
    }
    let panel = Panel::with_synthetic_calendar(series)?;
    panel.write_csv(&args.out)?;
    log::info!("wrote {} series to {}", panel.series().len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Analyze(a) => run(a, Stages::ALL),
        Command::Mi(a) => run(a, Stages::DEPENDENCE),
        Command::Report(a) => report(a).map(|_| false),
        Command::Generate(a) => generate_panel(a).map(|_| false),
    };
    match outcome {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
