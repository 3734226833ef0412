//! Panel-level runs: every series, every requested pair, failures isolated.
//!
//! Work is scheduled through [`crate::par`] and collected in index order, so
//! results do not depend on the number of worker threads.

use std::collections::HashMap;
use std::path::PathBuf;

use serde::Serialize;

use crate::dcca::{dcca_coefficient, DccaProfile};
use crate::error::{Error, Result};
use crate::fit::{detect_crossover, fit_scaling, CrossoverReport, ScalingFit, DEFAULT_CROSSOVER_THRESHOLD};
use crate::fluctuation::{fluctuation_surface, FluctuationSurface, QGrid, ScaleGrid};
use crate::mutual_info::{
    default_bins, gcc_group_stats, independence_test, mutual_information, DependenceReport, GroupTable,
    DEFAULT_SIGNIFICANCE, DEFAULT_SURROGATES,
};
use crate::panel::{load_panel, IngestOptions, MissingPolicy, Panel};
use crate::par;
use crate::series::{profile_of, MarketClass, Profile};
use crate::spectrum::{mixed_pair_check, summarize, Branch, MixedPairPoint, MultifractalSummary};

/// How the scale grid is chosen.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleSpec {
    /// 30 geometric scales from 10 to half the series length.
    Default,
    Geometric {
        min: usize,
        max: usize,
        count: usize,
    },
    Explicit(Vec<usize>),
}

impl ScaleSpec {
    pub fn resolve(&self, length: usize, order: usize) -> Result<ScaleGrid> {
        let grid = match self {
            ScaleSpec::Default => ScaleGrid::default_for(length, order)?,
            ScaleSpec::Geometric { min, max, count } => ScaleGrid::geometric(*min, *max, *count)?,
            ScaleSpec::Explicit(s) => ScaleGrid::explicit(s.clone())?,
        };
        grid.validate(length, order)?;
        Ok(grid)
    }
}

impl std::str::FromStr for ScaleSpec {
    type Err = Error;

    /// `default`, `min:max:count`, or a comma-separated list.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidInput(format!("cannot parse scales {s:?}"));
        if s == "default" {
            return Ok(ScaleSpec::Default);
        }
        if s.contains(':') {
            let parts: Vec<usize> = s
                .split(':')
                .map(|p| p.trim().parse().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            return match parts[..] {
                [min, max, count] => Ok(ScaleSpec::Geometric { min, max, count }),
                _ => Err(bad()),
            };
        }
        let list = s
            .split(',')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<Vec<usize>>>()?;
        Ok(ScaleSpec::Explicit(list))
    }
}

/// Parses a comma-separated q list, or `default`.
pub fn parse_q_grid(s: &str) -> Result<QGrid> {
    if s.trim() == "default" {
        return Ok(QGrid::default());
    }
    let qs = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("cannot parse q value {p:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    QGrid::new(qs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairFilter {
    All,
    /// Explicit unordered pairs of series ids; empty means no pairs.
    Only(Vec<(String, String)>),
}

impl std::str::FromStr for PairFilter {
    type Err = Error;

    /// `all`, `none`, empty, or `a:b,c:d`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(PairFilter::All),
            "" | "none" => Ok(PairFilter::Only(Vec::new())),
            list => list
                .split(',')
                .map(|p| match p.split_once(':') {
                    Some((a, b)) if !a.trim().is_empty() && !b.trim().is_empty() => {
                        Ok((a.trim().to_string(), b.trim().to_string()))
                    }
                    _ => Err(Error::InvalidInput(format!("pair {p:?} is not of the form a:b"))),
                })
                .collect::<Result<_>>()
                .map(PairFilter::Only),
        }
    }
}

/// Which pairwise analyses to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Stages {
    pub multifractal: bool,
    pub dcca: bool,
    pub dependence: bool,
}

impl Stages {
    pub const ALL: Stages = Stages {
        multifractal: true,
        dcca: true,
        dependence: true,
    };
    pub const DEPENDENCE: Stages = Stages {
        multifractal: false,
        dcca: false,
        dependence: true,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub metadata: Option<PathBuf>,
    pub scales: ScaleSpec,
    pub q_grid: Vec<f64>,
    pub order: usize,
    /// MI partition count; `None` uses the default rule on the panel length.
    pub bins: Option<usize>,
    pub surrogates: usize,
    pub significance: f64,
    pub seed: u64,
    pub missing: MissingPolicy,
    pub log_transform: bool,
    pub pairs: PairFilter,
    pub window: Option<(usize, usize)>,
    pub crossover_threshold: f64,
    /// Also write per-pair fluctuation curves and per-scale DCCA values.
    pub pair_details: bool,
    pub stages: Stages,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            metadata: None,
            scales: ScaleSpec::Default,
            q_grid: QGrid::default().values().to_vec(),
            order: 1,
            bins: None,
            surrogates: DEFAULT_SURROGATES,
            significance: DEFAULT_SIGNIFICANCE,
            seed: 0,
            missing: MissingPolicy::ForwardFill,
            log_transform: false,
            pairs: PairFilter::All,
            window: None,
            crossover_threshold: DEFAULT_CROSSOVER_THRESHOLD,
            pair_details: false,
            stages: Stages::ALL,
        }
    }
}

/// SplitMix64 finalizer of `master` and `index`: independent per-pair seeds.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub stage: &'static str,
    pub id_x: String,
    pub id_y: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SeriesAnalysis {
    pub surface: FluctuationSurface,
    pub fit: ScalingFit,
    pub summary: MultifractalSummary,
    pub crossover: Option<CrossoverReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SeriesResult {
    pub id: String,
    pub label: String,
    pub class: MarketClass,
    pub analysis: std::result::Result<SeriesAnalysis, String>,
    /// Self mutual information, the diagonal of the MI matrix.
    pub self_mi: Option<f64>,
}

impl SeriesResult {
    pub fn is_nonstationary(&self) -> bool {
        matches!(
            &self.analysis,
            Ok(a) if a.summary.exponents.as_ref().is_some_and(|e| e.branch == Branch::NonStationary)
        )
    }
}

#[derive(Debug, Clone)]
pub struct PairMultifractal {
    pub surface: Option<FluctuationSurface>,
    pub fit: ScalingFit,
    pub summary: MultifractalSummary,
    pub mixed: Vec<MixedPairPoint>,
}

#[derive(Debug, Clone)]
pub struct PairResult {
    pub i: usize,
    pub j: usize,
    pub multifractal: Option<std::result::Result<PairMultifractal, String>>,
    pub dcca: Option<std::result::Result<DccaProfile, String>>,
    pub dependence: Option<std::result::Result<DependenceReport, String>>,
}

#[derive(Debug, Clone)]
pub struct RunResults {
    pub config: RunConfig,
    pub length: usize,
    pub scales: ScaleGrid,
    pub bins: usize,
    pub series: Vec<SeriesResult>,
    pub pairs: Vec<PairResult>,
    pub groups: Option<GroupTable>,
    pub failures: Vec<Failure>,
    pub alignment: AlignmentReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentReport {
    pub policy: MissingPolicy,
    pub first_date: Option<String>,
    pub last_date: Option<String>,
    pub rows: usize,
    pub forward_filled: usize,
    pub dropped_rows: usize,
}

fn alignment_of(panel: &Panel, policy: MissingPolicy) -> AlignmentReport {
    use crate::panel::GapAction;
    let (mut filled, mut dropped) = (0, 0);
    for a in panel.actions() {
        match a {
            GapAction::ForwardFilled { .. } => filled += 1,
            GapAction::DroppedRow { .. } => dropped += 1,
        }
    }
    AlignmentReport {
        policy,
        first_date: panel.calendar().first().map(|d| d.to_string()),
        last_date: panel.calendar().last().map(|d| d.to_string()),
        rows: panel.len(),
        forward_filled: filled,
        dropped_rows: dropped,
    }
}

/// Resolves the pair filter into index pairs `(i, j)`, `i < j`, in panel order.
pub fn select_pairs(ids: &[&str], filter: &PairFilter) -> Result<Vec<(usize, usize)>> {
    let n = ids.len();
    match filter {
        PairFilter::All => Ok((0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()),
        PairFilter::Only(list) => {
            let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
            let mut out = Vec::with_capacity(list.len());
            for (a, b) in list {
                let lookup = |id: &String| {
                    index
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| Error::InvalidInput(format!("pair filter names unknown series {id:?}")))
                };
                let (i, j) = (lookup(a)?, lookup(b)?);
                if i == j {
                    return Err(Error::InvalidInput(format!("pair filter repeats series {a:?}")));
                }
                out.push((i.min(j), i.max(j)));
            }
            out.sort_unstable();
            out.dedup();
            Ok(out)
        }
    }
}

fn analyze_series(profile: &Profile, scales: &ScaleGrid, qs: &QGrid, config: &RunConfig) -> Result<SeriesAnalysis> {
    let surface = fluctuation_surface(profile, profile, scales, qs, config.order)?;
    let fit = fit_scaling(&surface, config.window)?;
    let summary = summarize(&fit)?;
    let mut warnings = surface.warnings.clone();
    warnings.extend(fit.warnings.iter().cloned());
    warnings.extend(summary.spectrum.warnings.iter().cloned());
    if summary.exponents.is_none() {
        warnings.push("q = 2 not in grid: H, gamma and beta unavailable".into());
    }
    let crossover = if qs.index_of(2.0).is_some() {
        match detect_crossover(&surface, 2.0, config.crossover_threshold) {
            Ok(c) => {
                if c.flagged {
                    warnings.push(format!(
                        "crossover near s = {} (chi-square reduced by {:.0}%)",
                        c.breakpoint.unwrap_or(0),
                        100.0 * c.improvement
                    ));
                }
                Some(c)
            }
            Err(e) => {
                warnings.push(format!("crossover check skipped: {e}"));
                None
            }
        }
    } else {
        None
    };
    Ok(SeriesAnalysis {
        surface,
        fit,
        summary,
        crossover,
        warnings,
    })
}

fn analyze_pair_multifractal(
    px: &Profile,
    py: &Profile,
    fx: &ScalingFit,
    fy: &ScalingFit,
    scales: &ScaleGrid,
    qs: &QGrid,
    config: &RunConfig,
) -> Result<PairMultifractal> {
    let surface = fluctuation_surface(px, py, scales, qs, config.order)?;
    let fit = fit_scaling(&surface, config.window)?;
    let summary = summarize(&fit)?;
    let mixed = mixed_pair_check(fx, fy, &fit)?;
    Ok(PairMultifractal {
        surface: config.pair_details.then_some(surface),
        fit,
        summary,
        mixed,
    })
}

/// Runs the configured analyses on an in-memory panel.
pub fn analyze_panel(panel: &Panel, config: &RunConfig) -> Result<RunResults> {
    let qs = QGrid::new(config.q_grid.clone())?;
    let length = panel.len();
    let scales = config.scales.resolve(length, config.order)?;
    let bins = config.bins.unwrap_or_else(|| default_bins(length));
    let ids = panel.ids();
    let pair_list = select_pairs(&ids, &config.pairs)?;
    let mut failures = Vec::new();

    let profiles: Vec<std::result::Result<Profile, String>> =
        par::map(panel.series(), |s| profile_of(s).map_err(|e| e.to_string()));

    let series: Vec<SeriesResult> = par::map_range(panel.series().len(), |i| {
        let s = &panel.series()[i];
        let analysis = if config.stages.multifractal {
            profiles[i]
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|p| analyze_series(p, &scales, &qs, config).map_err(|e| e.to_string()))
        } else {
            Err("multifractal stage not requested".into())
        };
        let self_mi = if config.stages.dependence {
            mutual_information(s.values(), s.values(), bins).ok()
        } else {
            None
        };
        SeriesResult {
            id: s.id.clone(),
            label: s.label.clone(),
            class: s.class,
            analysis,
            self_mi,
        }
    });
    if config.stages.multifractal {
        for r in &series {
            if let Err(e) = &r.analysis {
                failures.push(Failure {
                    stage: "series",
                    id_x: r.id.clone(),
                    id_y: r.id.clone(),
                    message: e.clone(),
                });
            }
        }
    }
    if config.stages.dependence {
        for (r, s) in series.iter().zip(panel.series()) {
            if r.self_mi.is_none() {
                let message = mutual_information(s.values(), s.values(), bins)
                    .err()
                    .map_or_else(|| "self mutual information unavailable".into(), |e| e.to_string());
                failures.push(Failure {
                    stage: "self_mi",
                    id_x: r.id.clone(),
                    id_y: r.id.clone(),
                    message,
                });
            }
        }
    }

    let n = panel.series().len() as u64;
    let pairs: Vec<PairResult> = par::map(&pair_list, |&(i, j)| {
        let (px, py) = (&profiles[i], &profiles[j]);
        let both = || match (px, py) {
            (Ok(x), Ok(y)) => Ok((x, y)),
            (Err(e), _) | (_, Err(e)) => Err(e.clone()),
        };
        let multifractal = config.stages.multifractal.then(|| {
            let (x, y) = both()?;
            match (&series[i].analysis, &series[j].analysis) {
                (Ok(ax), Ok(ay)) => {
                    analyze_pair_multifractal(x, y, &ax.fit, &ay.fit, &scales, &qs, config).map_err(|e| e.to_string())
                }
                _ => Err("a member series failed its single-series analysis".into()),
            }
        });
        let dcca = config.stages.dcca.then(|| {
            let (x, y) = both()?;
            dcca_coefficient(x, y, &scales, config.order).map_err(|e| e.to_string())
        });
        let dependence = config.stages.dependence.then(|| {
            let seed = derive_seed(config.seed, i as u64 * n + j as u64);
            independence_test(
                panel.series()[i].values(),
                panel.series()[j].values(),
                bins,
                config.surrogates,
                config.significance,
                seed,
            )
            .map_err(|e| e.to_string())
        });
        PairResult {
            i,
            j,
            multifractal,
            dcca,
            dependence,
        }
    });

    for p in &pairs {
        let mut note = |stage: &'static str, r: Option<std::result::Result<(), &String>>| {
            if let Some(Err(message)) = r {
                failures.push(Failure {
                    stage,
                    id_x: ids[p.i].to_string(),
                    id_y: ids[p.j].to_string(),
                    message: message.clone(),
                });
            }
        };
        note(
            "pair_multifractal",
            p.multifractal.as_ref().map(|r| r.as_ref().map(|_| ())),
        );
        note("dcca", p.dcca.as_ref().map(|r| r.as_ref().map(|_| ())));
        note(
            "mutual_information",
            p.dependence.as_ref().map(|r| r.as_ref().map(|_| ())),
        );
    }

    let groups = config.stages.dependence.then(|| {
        let entries: Vec<_> = pairs
            .iter()
            .filter_map(|p| match &p.dependence {
                Some(Ok(d)) => Some((panel.series()[p.i].class, panel.series()[p.j].class, d.gcc)),
                _ => None,
            })
            .collect();
        gcc_group_stats(&entries)
    });

    Ok(RunResults {
        config: config.clone(),
        length,
        scales,
        bins,
        series,
        pairs,
        groups,
        failures,
        alignment: alignment_of(panel, config.missing),
    })
}

/// Loads the configured panel, applying the log transform if requested.
pub fn load_configured_panel(config: &RunConfig) -> Result<Panel> {
    let panel = load_panel(
        &config.input,
        &IngestOptions {
            missing: config.missing,
            metadata: config.metadata.clone(),
        },
    )?;
    if config.log_transform {
        panel.log_transform()
    } else {
        Ok(panel)
    }
}
