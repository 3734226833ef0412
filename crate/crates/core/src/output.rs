//! CSV/JSON reports of a run, and the matrix reader.
//!
//! Floats use Rust's shortest round-trip formatting, so every written value
//! reads back bit-identically. Missing values are empty cells.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mutual_info::GroupTable;
use crate::pipeline::RunResults;

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

struct Table {
    path: PathBuf,
    writer: csv::Writer<fs::File>,
}

impl Table {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(header)?;
        Ok(Self { path, writer })
    }

    fn row<I, S>(&mut self, cells: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        Ok(self.writer.write_record(cells)?)
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.path)
    }
}

/// Writes every report for `results` into `dir`, returning the file paths.
///
/// Pair files are written only when at least one pair was analysed.
pub fn write_outputs(results: &RunResults, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let stages = results.config.stages;
    if stages.multifractal {
        files.push(write_summary(results, dir)?);
        files.push(write_bars(results, dir)?);
        files.extend(write_curves(results, dir)?);
    }
    if !results.pairs.is_empty() {
        if stages.multifractal {
            files.push(write_pair_summary(results, dir)?);
            files.push(write_mixed(results, dir)?);
        }
        if stages.dcca {
            files.extend(write_dcca(results, dir)?);
        }
        if stages.dependence {
            files.push(write_mi(results, dir)?);
        }
        files.extend(write_matrices(results, dir)?);
    }
    if let Some(groups) = &results.groups {
        if !results.pairs.is_empty() {
            files.push(write_group_stats(groups, dir)?);
        }
    }
    files.push(write_failures(results, dir)?);
    files.push(write_metadata(results, dir)?);
    Ok(files)
}

fn write_summary(results: &RunResults, dir: &Path) -> Result<PathBuf> {
    let mut t = Table::create(
        dir,
        "summary.csv",
        &[
            "id",
            "label",
            "class",
            "status",
            "h2",
            "sigma_minus",
            "sigma_plus",
            "H",
            "gamma",
            "beta",
            "branch",
            "delta_alpha",
            "alpha_min",
            "alpha_max",
            "s_lo",
            "s_hi",
            "crossover",
            "crossover_scale",
            "crossover_improvement",
            "warnings",
        ],
    )?;
    for r in &results.series {
        let mut row = vec![r.id.clone(), r.label.clone(), r.class.to_string()];
        match &r.analysis {
            Ok(a) => {
                let rec2 = a.fit.record(2.0);
                let e = a.summary.exponents.as_ref();
                let sp = &a.summary.spectrum;
                row.extend([
                    "ok".to_string(),
                    opt(rec2.map(|r| r.h)),
                    opt(rec2.map(|r| r.sigma_minus)),
                    opt(rec2.map(|r| r.sigma_plus)),
                    opt(e.map(|e| e.hurst)),
                    opt(e.map(|e| e.gamma)),
                    opt(e.map(|e| e.beta)),
                    e.map(|e| e.branch.to_string()).unwrap_or_default(),
                    num(sp.delta_alpha),
                    num(sp.alpha_min),
                    num(sp.alpha_max),
                    a.fit.s_lo.to_string(),
                    a.fit.s_hi.to_string(),
                    a.crossover.as_ref().map(|c| c.flagged.to_string()).unwrap_or_default(),
                    a.crossover
                        .as_ref()
                        .and_then(|c| c.breakpoint)
                        .map(|b| b.to_string())
                        .unwrap_or_default(),
                    opt(a.crossover.as_ref().map(|c| c.improvement)),
                    a.warnings.join("; "),
                ]);
            }
            Err(e) => {
                row.push(
                    if e.contains("egenerate") {
                        "degenerate"
                    } else {
                        "failed"
                    }
                    .to_string(),
                );
                row.extend(std::iter::repeat_n(String::new(), 15));
                row.push(e.clone());
            }
        }
        t.row(&row)?;
    }
    t.finish()
}

fn write_bars(results: &RunResults, dir: &Path) -> Result<PathBuf> {
    let mut t = Table::create(
        dir,
        "bars.csv",
        &["id", "label", "class", "H", "H_minus", "H_plus", "delta_alpha"],
    )?;
    for r in &results.series {
        if let Ok(a) = &r.analysis {
            let rec2 = a.fit.record(2.0);
            t.row([
                r.id.clone(),
                r.label.clone(),
                r.class.to_string(),
                opt(a.summary.exponents.as_ref().map(|e| e.hurst)),
                opt(rec2.map(|r| r.sigma_minus)),
                opt(rec2.map(|r| r.sigma_plus)),
                num(a.summary.delta_alpha()),
            ])?;
        }
    }
    t.finish()
}

fn write_curves(results: &RunResults, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut fs_t = Table::create(
        dir,
        "fs_curves.csv",
        &["id_x", "id_y", "q", "s", "F", "sigma_obs", "mode", "order"],
    )?;
    let mut hq = Table::create(
        dir,
        "hq.csv",
        &[
            "id_x",
            "id_y",
            "q",
            "h",
            "sigma_minus",
            "sigma_plus",
            "tau",
            "chi2",
            "n_scales",
            "s_lo",
            "s_hi",
        ],
    )?;
    let mut spec = Table::create(
        dir,
        "spectrum.csv",
        &["id_x", "id_y", "q", "h", "tau", "alpha", "f_alpha"],
    )?;

    let ids: Vec<&str> = results.series.iter().map(|s| s.id.as_str()).collect();
    let mut entries: Vec<(
        &str,
        &str,
        Option<&crate::fluctuation::FluctuationSurface>,
        &crate::fit::ScalingFit,
        &crate::spectrum::MultifractalSummary,
    )> = Vec::new();
    for r in &results.series {
        if let Ok(a) = &r.analysis {
            entries.push((&r.id, &r.id, Some(&a.surface), &a.fit, &a.summary));
        }
    }
    for p in &results.pairs {
        if let Some(Ok(m)) = &p.multifractal {
            entries.push((ids[p.i], ids[p.j], m.surface.as_ref(), &m.fit, &m.summary));
        }
    }
    for (x, y, surface, fit, summary) in entries {
        if let Some(s) = surface {
            for (q, scale, f, sig) in s.rows() {
                fs_t.row([
                    x.to_string(),
                    y.to_string(),
                    num(q),
                    scale.to_string(),
                    num(f),
                    num(sig),
                    s.mode.to_string(),
                    s.order.to_string(),
                ])?;
            }
        }
        for (r, p) in fit.records.iter().zip(&summary.spectrum.points) {
            hq.row([
                x.to_string(),
                y.to_string(),
                num(r.q),
                num(r.h),
                num(r.sigma_minus),
                num(r.sigma_plus),
                num(p.tau),
                num(r.chi2),
                r.n_scales.to_string(),
                fit.s_lo.to_string(),
                fit.s_hi.to_string(),
            ])?;
            spec.row([
                x.to_string(),
                y.to_string(),
                num(p.q),
                num(r.h),
                num(p.tau),
                num(p.alpha),
                num(p.f_alpha),
            ])?;
        }
    }
    Ok(vec![fs_t.finish()?, hq.finish()?, spec.finish()?])
}

fn write_pair_summary(results: &RunResults, dir: &Path) -> Result<PathBuf> {
    let mut t = Table::create(
        dir,
        "multifractal_summary.csv",
        &["id_x", "id_y", "H", "gamma", "beta", "delta_alpha", "branch"],
    )?;
    let ids: Vec<&str> = results.series.iter().map(|s| s.id.as_str()).collect();
    for p in &results.pairs {
        if let Some(Ok(m)) = &p.multifractal {
            let e = m.summary.exponents.as_ref();
            t.row([
                ids[p.i].to_string(),
                ids[p.j].to_string(),
                opt(e.map(|e| e.hurst)),
                opt(e.map(|e| e.gamma)),
                opt(e.map(|e| e.beta)),
                num(m.summary.delta_alpha()),
                e.map(|e| e.branch.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    t.finish()
}

fn write_mixed(results: &RunResults, dir: &Path) -> Result<PathBuf> {
    let mut t = Table::create(
        dir,
        "mixed_pair.csv",
        &["id_x", "id_y", "q", "delta", "sigma", "significant"],
    )?;
    let ids: Vec<&str> = results.series.iter().map(|s| s.id.as_str()).collect();
    for p in &results.pairs {
        if let Some(Ok(m)) = &p.multifractal {
            for d in &m.mixed {
                t.row([
                    ids[p.i].to_string(),
                    ids[p.j].to_string(),
                    num(d.q),
                    num(d.delta),
                    num(d.sigma),
                    d.significant.to_string(),
                ])?;
            }
        }
    }
    t.finish()
}

fn write_dcca(results: &RunResults, dir: &Path) -> Result<Vec<PathBuf>> {
    let ids: Vec<&str> = results.series.iter().map(|s| s.id.as_str()).collect();
    let mut t = Table::create(dir, "dcca.csv", &["id_x", "id_y", "sigma", "delta_sigma"])?;
    let mut detail = if results.config.pair_details {
        Some(Table::create(dir, "dcca_scales.csv", &["id_x", "id_y", "s", "sigma"])?)
    } else {
        None
    };
    for p in &results.pairs {
        if let Some(Ok(d)) = &p.dcca {
            t.row([
                ids[p.i].to_string(),
                ids[p.j].to_string(),
                num(d.mean),
                num(d.dispersion),
            ])?;
            if let Some(detail) = detail.as_mut() {
                for (s, v) in d.scales.iter().zip(&d.per_scale) {
                    detail.row([ids[p.i].to_string(), ids[p.j].to_string(), s.to_string(), num(*v)])?;
                }
            }
        }
    }
    let mut out = vec![t.finish()?];
    if let Some(d) = detail {
        out.push(d.finish()?);
    }
    Ok(out)
}

fn write_mi(results: &RunResults, dir: &Path) -> Result<PathBuf> {
    let mut t = Table::create(
        dir,
        "mi.csv",
        &[
            "id_x",
            "id_y",
            "class_x",
            "class_y",
            "I_nats",
            "lambda",
            "bins",
            "crit_value",
            "p_value",
            "reject",
            "nonstationary",
        ],
    )?;
    for p in &results.pairs {
        if let Some(Ok(d)) = &p.dependence {
            let (x, y) = (&results.series[p.i], &results.series[p.j]);
            t.row([
                x.id.clone(),
                y.id.clone(),
                x.class.to_string(),
                y.class.to_string(),
                num(d.mi),
                num(d.gcc),
                d.bins.to_string(),
                num(d.critical_value),
                num(d.p_value),
                d.reject.to_string(),
                (x.is_nonstationary() || y.is_nonstationary()).to_string(),
            ])?;
        }
    }
    t.finish()
}

/// Square matrix with ids on both axes; missing entries are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl Matrix {
    fn filled(ids: Vec<String>) -> Self {
        let n = ids.len();
        Self {
            ids,
            values: vec![vec![f64::NAN; n]; n],
        }
    }

    fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.values[i][j] = v;
        self.values[j][i] = v;
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(std::iter::once("id").chain(self.ids.iter().map(String::as_str)))?;
        for (id, row) in self.ids.iter().zip(&self.values) {
            w.write_record(std::iter::once(id.clone()).chain(row.iter().map(|v| {
                if v.is_nan() {
                    String::new()
                } else {
                    num(*v)
                }
            })))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Reads a matrix written by [`write_outputs`]. Empty cells become NaN.
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let malformed = |line: u64, reason: String| Error::MalformedCsv {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
            _ => Error::Csv(e),
        })?;
    let ids: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut values = Vec::with_capacity(ids.len());
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = k as u64 + 2;
        if rec.get(0) != ids.get(k).map(String::as_str) {
            return Err(malformed(line, "row id does not match the header order".into()));
        }
        let row = rec
            .iter()
            .skip(1)
            .map(|c| {
                if c.is_empty() {
                    Ok(f64::NAN)
                } else {
                    c.parse::<f64>()
                        .map_err(|_| malformed(line, format!("not a number: {c:?}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != ids.len() {
            return Err(malformed(
                line,
                format!("expected {} values, found {}", ids.len(), row.len()),
            ));
        }
        values.push(row);
    }
    if values.len() != ids.len() {
        return Err(malformed(values.len() as u64 + 1, "matrix is not square".into()));
    }
    Ok(Matrix { ids, values })
}

/// Pairwise matrices with single-series values on the diagonal.
pub fn build_matrices(results: &RunResults) -> Vec<(&'static str, Matrix)> {
    let ids: Vec<String> = results.series.iter().map(|s| s.id.clone()).collect();
    let stages = results.config.stages;
    let mut out = Vec::new();

    if stages.multifractal {
        type Pick = fn(&crate::spectrum::MultifractalSummary) -> Option<f64>;
        let picks: [(&str, Pick); 3] = [
            ("matrix_H.csv", |m| m.exponents.as_ref().map(|e| e.hurst)),
            ("matrix_gamma.csv", |m| m.exponents.as_ref().map(|e| e.gamma)),
            ("matrix_delta_alpha.csv", |m| Some(m.delta_alpha())),
        ];
        for (name, pick) in picks {
            let mut m = Matrix::filled(ids.clone());
            for (i, s) in results.series.iter().enumerate() {
                if let Ok(a) = &s.analysis {
                    m.values[i][i] = pick(&a.summary).unwrap_or(f64::NAN);
                }
            }
            for p in &results.pairs {
                if let Some(Ok(pm)) = &p.multifractal {
                    m.set_sym(p.i, p.j, pick(&pm.summary).unwrap_or(f64::NAN));
                }
            }
            out.push((name, m));
        }
    }
    if stages.dcca {
        let mut sigma = Matrix::filled(ids.clone());
        let mut spread = Matrix::filled(ids.clone());
        for i in 0..ids.len() {
            sigma.values[i][i] = 1.0;
            spread.values[i][i] = 0.0;
        }
        for p in &results.pairs {
            if let Some(Ok(d)) = &p.dcca {
                sigma.set_sym(p.i, p.j, d.mean);
                spread.set_sym(p.i, p.j, d.dispersion);
            }
        }
        out.push(("matrix_sigma_dcca.csv", sigma));
        out.push(("matrix_delta_sigma.csv", spread));
    }
    if stages.dependence {
        let mut gcc = Matrix::filled(ids.clone());
        let mut mi = Matrix::filled(ids.clone());
        for (i, s) in results.series.iter().enumerate() {
            if let Some(v) = s.self_mi {
                mi.values[i][i] = v;
                gcc.values[i][i] = crate::mutual_info::gcc(v).unwrap_or(f64::NAN);
            }
        }
        for p in &results.pairs {
            if let Some(Ok(d)) = &p.dependence {
                gcc.set_sym(p.i, p.j, d.gcc);
                mi.set_sym(p.i, p.j, d.mi);
            }
        }
        out.push(("matrix_gcc.csv", gcc));
        out.push(("matrix_mi.csv", mi));
    }
    out
}

fn write_matrices(results: &RunResults, dir: &Path) -> Result<Vec<PathBuf>> {
    build_matrices(results)
        .into_iter()
        .map(|(name, m)| {
            let path = dir.join(name);
            m.write(&path)?;
            Ok(path)
        })
        .collect()
}

/// Group statistics laid out with statistics as rows and class pairs as columns.
pub fn write_group_stats(groups: &GroupTable, dir: &Path) -> Result<PathBuf> {
    let keys: Vec<&str> = groups.groups.iter().map(|g| g.key).collect();
    let mut header = vec!["statistic"];
    header.extend(&keys);
    let mut t = Table::create(dir, "gcc_groups.csv", &header)?;
    type Stat = fn(&crate::mutual_info::GroupStats) -> Option<f64>;
    let stats: [(&str, Stat); 9] = [
        ("mean", |g| g.mean),
        ("median", |g| g.median),
        ("sd", |g| g.sd),
        ("kurtosis_raw", |g| g.kurtosis_raw),
        ("kurtosis_excess", |g| g.kurtosis_excess),
        ("skewness", |g| g.skewness),
        ("min", |g| g.min),
        ("max", |g| g.max),
        ("n", |g| Some(g.n as f64)),
    ];
    for (name, stat) in stats {
        t.row(std::iter::once(name.to_string()).chain(groups.groups.iter().map(|g| opt(stat(g)))))?;
    }
    t.finish()
}

fn write_failures(results: &RunResults, dir: &Path) -> Result<PathBuf> {
    let mut t = Table::create(dir, "failures.csv", &["stage", "id_x", "id_y", "error"])?;
    for f in &results.failures {
        t.row([f.stage, &f.id_x, &f.id_y, &f.message])?;
    }
    t.finish()
}

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a crate::pipeline::RunConfig,
    length: usize,
    scales: &'a [usize],
    fit_window: String,
    mi_bins: usize,
    n_series: usize,
    n_pairs: usize,
    n_failures: usize,
    alignment: &'a crate::pipeline::AlignmentReport,
    warnings: Vec<String>,
}

fn write_metadata(results: &RunResults, dir: &Path) -> Result<PathBuf> {
    let fit_window = match results.config.window {
        Some((lo, hi)) => format!("[{lo}, {hi}]"),
        None => format!(
            "scales with at least {} segments per direction",
            crate::fit::MIN_FIT_SEGMENTS
        ),
    };
    let mut warnings: Vec<String> = Vec::new();
    if let Some(g) = &results.groups {
        warnings.extend(g.warnings.iter().cloned());
    }
    let meta = Metadata {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: &results.config,
        length: results.length,
        scales: results.scales.scales(),
        fit_window,
        mi_bins: results.bins,
        n_series: results.series.len(),
        n_pairs: results.pairs.len(),
        n_failures: results.failures.len(),
        alignment: &results.alignment,
        warnings,
    };
    let path = dir.join("run_metadata.json");
    let text = serde_json::to_string_pretty(&meta)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
