//! Segment-wise polynomial detrending and the q-order fluctuation surface.
//!
//! Both profiles are cut into `int(t/s)` non-overlapping windows from the
//! start and the same number from the end, giving `2 * int(t/s)` segments.
//! Each window is detrended by an order-`m` least-squares polynomial and the
//! mean product of the two residual series is the segment covariance.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::series::Profile;

pub const DEFAULT_MIN_SCALE: usize = 10;
pub const DEFAULT_SCALE_COUNT: usize = 30;
pub const MAX_ORDER: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Geometric,
    Explicit,
}

/// Strictly increasing list of segment lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleGrid {
    scales: Vec<usize>,
    spacing: Spacing,
}

impl ScaleGrid {
    pub fn explicit(mut scales: Vec<usize>) -> Result<Self> {
        scales.sort_unstable();
        scales.dedup();
        if scales.is_empty() || scales[0] == 0 {
            return Err(Error::InvalidInput("scale grid must hold positive integers".into()));
        }
        Ok(Self {
            scales,
            spacing: Spacing::Explicit,
        })
    }

    /// `count` log-spaced integers between `min` and `max`, rounded and
    /// deduplicated.
    pub fn geometric(min: usize, max: usize, count: usize) -> Result<Self> {
        if min == 0 || max < min || count == 0 {
            return Err(Error::InvalidInput(format!(
                "bad geometric scale range {min}..{max} with {count} points"
            )));
        }
        let mut scales: Vec<usize> = if count == 1 || max == min {
            vec![min]
        } else {
            let (lo, hi) = ((min as f64).ln(), (max as f64).ln());
            (0..count)
                .map(|i| {
                    let f = i as f64 / (count - 1) as f64;
                    ((lo + f * (hi - lo)).exp().round() as usize).clamp(min, max)
                })
                .collect()
        };
        scales.dedup();
        Ok(Self {
            scales,
            spacing: Spacing::Geometric,
        })
    }

    /// 30 geometric scales from 10 to `length / 2`.
    pub fn default_for(length: usize, order: usize) -> Result<Self> {
        let min = DEFAULT_MIN_SCALE.max(order + 2);
        let max = length / 2;
        if max < min {
            return Err(Error::InvalidInput(format!(
                "series of length {length} is too short for the default scale grid"
            )));
        }
        Self::geometric(min, max, DEFAULT_SCALE_COUNT)
    }

    pub fn scales(&self) -> &[usize] {
        &self.scales
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn validate(&self, length: usize, order: usize) -> Result<()> {
        for &s in &self.scales {
            check_scale(s, length, order)?;
        }
        Ok(())
    }
}

fn check_scale(scale: usize, length: usize, order: usize) -> Result<()> {
    let bad = |reason| Error::InvalidScale {
        scale,
        length,
        order,
        reason,
    };
    if order > MAX_ORDER {
        return Err(bad("detrend order must be 0..=3"));
    }
    if scale < order + 2 {
        return Err(bad("segment too short for the detrend order"));
    }
    if scale > length / 2 {
        return Err(bad("fewer than 2 segments per direction"));
    }
    Ok(())
}

/// Moments at which the fluctuation function is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QGrid {
    values: Vec<f64>,
}

impl QGrid {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|q| !q.is_finite()) {
            return Err(Error::InvalidInput("q-grid must hold finite values".into()));
        }
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, q: f64) -> Option<usize> {
        self.values.iter().position(|&v| v == q)
    }
}

impl Default for QGrid {
    fn default() -> Self {
        Self {
            values: vec![
                -10.0, -8.0, -6.0, -5.0, -4.0, -3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0,
                10.0,
            ],
        }
    }
}

/// Orthonormal polynomial basis on the points `0..s`.
///
/// Residuals are `y - sum_k <y, phi_k> phi_k`, which is the order-`m`
/// least-squares fit without forming normal equations.
#[derive(Debug, Clone)]
pub struct Detrender {
    scale: usize,
    basis: Vec<Vec<f64>>,
}

impl Detrender {
    pub fn new(scale: usize, order: usize) -> Self {
        let half = scale as f64 / 2.0;
        let centre = (scale as f64 - 1.0) / 2.0;
        let x: Vec<f64> = (0..scale).map(|i| (i as f64 - centre) / half).collect();
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(order + 1);
        for k in 0..=order {
            let mut v: Vec<f64> = x.iter().map(|&xi| xi.powi(k as i32)).collect();
            // Modified Gram-Schmidt, twice for good measure on order 3.
            for _ in 0..2 {
                for b in &basis {
                    let proj: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                    v.iter_mut().zip(b).for_each(|(a, c)| *a -= proj * c);
                }
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
        Self { scale, basis }
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    /// Writes the detrended residuals of `segment` into `out`.
    pub fn residuals(&self, segment: &[f64], out: &mut [f64]) {
        debug_assert_eq!(segment.len(), self.scale);
        out.copy_from_slice(segment);
        for b in &self.basis {
            let coef: f64 = segment.iter().zip(b).map(|(y, p)| y * p).sum();
            out.iter_mut().zip(b).for_each(|(r, p)| *r -= coef * p);
        }
    }
}

/// Detrended covariance of every forward and backward segment at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentCovariances {
    pub scale: usize,
    /// Forward segments first, then backward segments.
    pub values: Vec<f64>,
}

impl SegmentCovariances {
    pub fn segments_per_direction(&self) -> usize {
        self.values.len() / 2
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

fn check_pair(x: &Profile, y: &Profile) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "profiles {} and {} differ in length ({} vs {})",
            x.source_id,
            y.source_id,
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

pub(crate) fn covariances_with(x: &[f64], y: &[f64], detrender: &Detrender) -> SegmentCovariances {
    let s = detrender.scale();
    let t = x.len();
    let per_dir = t / s;
    let same = std::ptr::eq(x, y);
    let mut rx = vec![0.0; s];
    let mut ry = vec![0.0; s];
    let mut values = Vec::with_capacity(2 * per_dir);
    let starts = (0..per_dir).map(|m| m * s).chain((0..per_dir).map(|m| t - (m + 1) * s));
    for start in starts {
        detrender.residuals(&x[start..start + s], &mut rx);
        let cov = if same {
            rx.iter().map(|r| r * r).sum::<f64>()
        } else {
            detrender.residuals(&y[start..start + s], &mut ry);
            rx.iter().zip(&ry).map(|(a, b)| a * b).sum::<f64>()
        };
        values.push(cov / s as f64);
    }
    SegmentCovariances { scale: s, values }
}

/// Detrended covariances for all `2 * int(t/s)` segments at scale `s`.
pub fn segment_covariances(x: &Profile, y: &Profile, scale: usize, order: usize) -> Result<SegmentCovariances> {
    check_pair(x, y)?;
    check_scale(scale, x.len(), order)?;
    let detrender = Detrender::new(scale, order);
    let (xv, yv) = (x.values(), y.values());
    let yv = if xv == yv { xv } else { yv };
    Ok(covariances_with(xv, yv, &detrender))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Auto,
    Cross,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Auto => "auto",
            Mode::Cross => "cross",
        })
    }
}

/// `F(q; s)` on a scale-by-moment grid with its jackknife dispersion.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationSurface {
    scales: Vec<usize>,
    qs: Vec<f64>,
    /// Row-major by q.
    f: Vec<f64>,
    sigma: Vec<f64>,
    pub mode: Mode,
    pub order: usize,
    /// Length of the analysed series, when known.
    pub length: Option<usize>,
    pub warnings: Vec<String>,
}

impl FluctuationSurface {
    /// Assembles a surface from precomputed values indexed `[q][s]`.
    pub fn from_parts(
        scales: Vec<usize>,
        qs: Vec<f64>,
        f: Vec<Vec<f64>>,
        sigma: Vec<Vec<f64>>,
        mode: Mode,
        order: usize,
    ) -> Result<Self> {
        let shape_ok = f.len() == qs.len()
            && sigma.len() == qs.len()
            && f.iter().chain(&sigma).all(|row| row.len() == scales.len());
        if !shape_ok {
            return Err(Error::InvalidInput("surface dimensions do not match the grids".into()));
        }
        let f: Vec<f64> = f.into_iter().flatten().collect();
        let sigma: Vec<f64> = sigma.into_iter().flatten().collect();
        if f.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInput(
                "fluctuation values must be positive and finite".into(),
            ));
        }
        if sigma.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput(
                "dispersions must be non-negative and finite".into(),
            ));
        }
        Ok(Self {
            scales,
            qs,
            f,
            sigma,
            mode,
            order,
            length: None,
            warnings: Vec::new(),
        })
    }

    pub fn scales(&self) -> &[usize] {
        &self.scales
    }

    pub fn qs(&self) -> &[f64] {
        &self.qs
    }

    pub fn f(&self, qi: usize, si: usize) -> f64 {
        self.f[qi * self.scales.len() + si]
    }

    pub fn sigma(&self, qi: usize, si: usize) -> f64 {
        self.sigma[qi * self.scales.len() + si]
    }

    /// `F(q_i; s)` across all scales.
    pub fn row(&self, qi: usize) -> &[f64] {
        let n = self.scales.len();
        &self.f[qi * n..(qi + 1) * n]
    }

    pub fn sigma_row(&self, qi: usize) -> &[f64] {
        let n = self.scales.len();
        &self.sigma[qi * n..(qi + 1) * n]
    }

    /// Multiplies every F and dispersion by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.f.iter_mut().for_each(|v| *v *= c);
        out.sigma.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Tidy rows `(q, s, F, sigma_obs)`.
    pub fn rows(&self) -> impl Iterator<Item = (f64, usize, f64, f64)> + '_ {
        self.qs.iter().enumerate().flat_map(move |(qi, &q)| {
            self.scales
                .iter()
                .enumerate()
                .map(move |(si, &s)| (q, s, self.f(qi, si), self.sigma(qi, si)))
        })
    }
}

/// `F(q; s)` and its jackknife standard error from one scale's segments.
struct MomentEstimate {
    f: f64,
    sigma: f64,
    excluded: usize,
}

fn moment_estimate(covs: &[f64], q: f64) -> Option<MomentEstimate> {
    // Work in log space: log|F_m| scaled by q/2 for q != 0.
    let logs: Vec<f64> = covs
        .iter()
        .filter(|c| q > 0.0 || **c != 0.0)
        .map(|c| c.abs().ln())
        .collect();
    let excluded = covs.len() - logs.len();
    let n = logs.len();
    if n == 0 {
        return None;
    }
    let nf = n as f64;

    let (log_f, loo): (f64, Vec<f64>) = if q == 0.0 {
        let total: f64 = logs.iter().sum();
        let loo = if n > 1 {
            leave_one_out(&logs, |a, b| a + b, 0.0)
                .into_iter()
                .map(|sum| 0.5 * sum / (nf - 1.0))
                .collect()
        } else {
            Vec::new()
        };
        (0.5 * total / nf, loo)
    } else {
        let scaled: Vec<f64> = logs.iter().map(|l| 0.5 * q * l).collect();
        let top = scaled
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return None;
        }
        let terms: Vec<f64> = scaled.iter().map(|v| (v - top).exp()).collect();
        let total: f64 = terms.iter().sum();
        let log_f = (top + (total / nf).ln()) / q;
        let loo = if n > 1 {
            leave_one_out(&terms, |a, b| a + b, 0.0)
                .into_iter()
                .map(|sum| (top + (sum / (nf - 1.0)).ln()) / q)
                .collect()
        } else {
            Vec::new()
        };
        (log_f, loo)
    };

    let f = log_f.exp();
    let sigma = if loo.len() > 1 {
        let reps: Vec<f64> = loo.iter().map(|l| l.exp()).collect();
        if reps.iter().all(|r| r.is_finite()) {
            let mean = reps.iter().sum::<f64>() / nf;
            let ss: f64 = reps.iter().map(|r| (r - mean) * (r - mean)).sum();
            ((nf - 1.0) / nf * ss).sqrt()
        } else {
            f64::INFINITY
        }
    } else {
        0.0
    };
    Some(MomentEstimate { f, sigma, excluded })
}

/// `out[j] = op` over every element except `j`, via prefix/suffix scans.
fn leave_one_out(v: &[f64], op: impl Fn(f64, f64) -> f64, identity: f64) -> Vec<f64> {
    let n = v.len();
    let mut suffix = vec![identity; n + 1];
    for j in (0..n).rev() {
        suffix[j] = op(v[j], suffix[j + 1]);
    }
    let mut prefix = identity;
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        out.push(op(prefix, suffix[j + 1]));
        prefix = op(prefix, v[j]);
    }
    out
}

/// The MF-DFA (`x == y`) or MF-DXA fluctuation surface.
///
/// For `q != 0`, `F(q;s) = { mean_m |F(s,m)|^{q/2} }^{1/q}` over all `2 N_s`
/// segments; for `q = 0` the logarithmic average `exp(mean_m ln|F(s,m)| / 2)`.
/// Zero segment covariances contribute nothing for `q > 0` and are excluded
/// (with a warning) for `q <= 0`.
pub fn fluctuation_surface(
    x: &Profile,
    y: &Profile,
    scales: &ScaleGrid,
    qs: &QGrid,
    order: usize,
) -> Result<FluctuationSurface> {
    check_pair(x, y)?;
    scales.validate(x.len(), order)?;
    let xv = x.values();
    let same = xv == y.values();
    let yv = if same { xv } else { y.values() };
    let mode = if same { Mode::Auto } else { Mode::Cross };

    type Column = Result<(Vec<(f64, f64)>, Vec<String>)>;
    let columns: Vec<Column> = par::map(scales.scales(), |&s| {
        let covs = covariances_with(xv, yv, &Detrender::new(s, order));
        let mut warnings = Vec::new();
        let mut column = Vec::with_capacity(qs.len());
        for &q in qs.values() {
            let est = moment_estimate(&covs.values, q).ok_or_else(|| Error::DegenerateSegment {
                scale: s,
                segment: covs.values.iter().position(|c| *c == 0.0).unwrap_or(0),
            })?;
            if est.excluded > 0 {
                warnings.push(format!(
                    "scale {s}, q {q}: excluded {} zero-covariance segment(s)",
                    est.excluded
                ));
            }
            if !(est.f.is_finite() && est.f > 0.0) {
                return Err(Error::DegenerateSegment {
                    scale: s,
                    segment: covs.values.iter().position(|c| *c == 0.0).unwrap_or(0),
                });
            }
            column.push((est.f, est.sigma));
        }
        Ok((column, warnings))
    });

    let n_s = scales.len();
    let mut f = vec![0.0; qs.len() * n_s];
    let mut sigma = vec![0.0; qs.len() * n_s];
    let mut warnings = Vec::new();
    for (si, column) in columns.into_iter().enumerate() {
        let (column, w) = column?;
        warnings.extend(w);
        for (qi, (fv, sv)) in column.into_iter().enumerate() {
            f[qi * n_s + si] = fv;
            sigma[qi * n_s + si] = sv;
        }
    }
    Ok(FluctuationSurface {
        scales: scales.scales().to_vec(),
        qs: qs.values().to_vec(),
        f,
        sigma,
        mode,
        order,
        length: Some(x.len()),
        warnings,
    })
}
