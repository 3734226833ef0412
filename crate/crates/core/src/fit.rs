//! Likelihood fit of `F(q;s) ~ A s^h` and crossover detection.
//!
//! The objective is chi-square on raw fluctuation values,
//! `chi2(h) = sum_s [F(s) - A s^h]^2 / sigma(s)^2`, with the amplitude
//! profiled out analytically at every `h`. The best `h` comes from a grid
//! scan followed by Brent refinement; the 1-sigma bounds enclose 68.3% of the
//! normalized likelihood `exp(-chi2/2)`, grown outward from the peak.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fluctuation::{FluctuationSurface, Mode};
use crate::par;

pub const LIKELIHOOD_MASS: f64 = 0.683;
pub const DEFAULT_CROSSOVER_THRESHOLD: f64 = 0.3;
/// Minimum slope change, in nominal sigmas, for a crossover to be flagged.
pub const CROSSOVER_MIN_SIGMAS: f64 = 10.0;

/// Likelihood mass beyond this chi-square offset is treated as zero.
const DELTA_CHI2_CUTOFF: f64 = 40.0;
/// Fine-grid intervals on each side of the optimum.
const FINE_CELLS: usize = 1000;
/// Without an explicit window, fits use scales with at least this many
/// segments per direction; the jackknife dispersion is unreliable below it.
pub const MIN_FIT_SEGMENTS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub h_min: f64,
    pub h_max: f64,
    pub h_step: f64,
    /// Inclusive scale window `[s_lo, s_hi]`. `None` keeps scales with
    /// `s * MIN_FIT_SEGMENTS <= length`, or every scale if the length is unknown.
    pub window: Option<(usize, usize)>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            h_min: 0.0,
            h_max: 3.0,
            h_step: 0.001,
            window: None,
        }
    }
}

/// Fit result at a single moment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    pub q: f64,
    pub h: f64,
    pub sigma_minus: f64,
    pub sigma_plus: f64,
    pub amplitude: f64,
    pub chi2: f64,
    pub n_scales: usize,
    /// The likelihood did not decay inside `[h_min, h_max]`.
    pub truncated: bool,
}

impl ExponentFit {
    /// Symmetrized 1-sigma error.
    pub fn sigma(&self) -> f64 {
        0.5 * (self.sigma_minus + self.sigma_plus)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub records: Vec<ExponentFit>,
    pub s_lo: usize,
    pub s_hi: usize,
    pub mode: Mode,
    pub warnings: Vec<String>,
}

impl ScalingFit {
    pub fn qs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.q).collect()
    }

    pub fn record(&self, q: f64) -> Option<&ExponentFit> {
        self.records.iter().find(|r| r.q == q)
    }

    pub fn h(&self, q: f64) -> Option<f64> {
        self.record(q).map(|r| r.h)
    }
}

/// Weighted power-law objective on one row of a surface.
#[derive(Debug, Clone)]
pub struct PowerLawProblem {
    ln_s: Vec<f64>,
    f: Vec<f64>,
    weight: Vec<f64>,
}

impl PowerLawProblem {
    /// Points with non-positive F or dispersion are dropped.
    pub fn new(scales: &[f64], f: &[f64], sigma: &[f64]) -> Self {
        let mut p = Self {
            ln_s: Vec::new(),
            f: Vec::new(),
            weight: Vec::new(),
        };
        for ((&s, &fv), &sv) in scales.iter().zip(f).zip(sigma) {
            if s > 0.0 && fv.is_finite() && fv > 0.0 && sv.is_finite() && sv > 0.0 {
                p.ln_s.push(s.ln());
                p.f.push(fv);
                p.weight.push(1.0 / (sv * sv));
            }
        }
        p
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    /// `(chi2, amplitude)` with the amplitude profiled at `h`.
    pub fn chi2(&self, h: f64) -> (f64, f64) {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.f.len() {
            let p = (h * self.ln_s[i]).exp();
            num += self.weight[i] * self.f[i] * p;
            den += self.weight[i] * p * p;
        }
        let a = num / den;
        let chi2 = (0..self.f.len())
            .map(|i| {
                let r = self.f[i] - a * (h * self.ln_s[i]).exp();
                self.weight[i] * r * r
            })
            .sum();
        (chi2, a)
    }

    /// Grid scan plus Brent refinement; returns `(h, chi2, on_boundary)`.
    fn minimize(&self, opts: &FitOptions) -> (f64, f64, bool) {
        let n = ((opts.h_max - opts.h_min) / opts.h_step).round() as usize;
        let at = |i: usize| (opts.h_min + i as f64 * opts.h_step).min(opts.h_max);
        let mut best = (0usize, f64::INFINITY);
        for i in 0..=n {
            let c = self.chi2(at(i)).0;
            if c < best.1 {
                best = (i, c);
            }
        }
        let i = best.0;
        let lo = at(i.saturating_sub(1));
        let hi = at((i + 1).min(n));
        let (h, c) = brent_minimize(|h| self.chi2(h).0, lo, at(i), hi);
        let boundary = (i == 0 || i == n) && (h - opts.h_min).abs().min((h - opts.h_max).abs()) < opts.h_step;
        (h, c, boundary)
    }

    /// Best fit with asymmetric 68.3% likelihood bounds.
    pub fn fit(&self, q: f64, opts: &FitOptions) -> Result<ExponentFit> {
        if self.len() < 3 {
            return Err(Error::TooFewScales(self.len()));
        }
        let (h, chi2_min, on_boundary) = self.minimize(opts);
        if !chi2_min.is_finite() {
            return Err(Error::Degenerate(format!("non-finite likelihood at q = {q}")));
        }
        let delta = |x: f64| self.chi2(x).0 - chi2_min;

        // Find where the likelihood has decayed on each side by doubling.
        let edge = |dir: f64| -> (f64, bool) {
            let bound = if dir < 0.0 { opts.h_min } else { opts.h_max };
            let mut d = 1e-9;
            loop {
                let x = h + dir * d;
                if (dir < 0.0 && x <= bound) || (dir > 0.0 && x >= bound) {
                    return (bound, delta(bound) < DELTA_CHI2_CUTOFF);
                }
                if delta(x) >= DELTA_CHI2_CUTOFF {
                    return (x, false);
                }
                d *= 2.0;
            }
        };
        let (lo, lo_trunc) = edge(-1.0);
        let (hi, hi_trunc) = edge(1.0);

        let left: Vec<f64> = (0..=FINE_CELLS)
            .map(|j| lo + (h - lo) * j as f64 / FINE_CELLS as f64)
            .collect();
        let right: Vec<f64> = (0..=FINE_CELLS)
            .map(|j| h + (hi - h) * j as f64 / FINE_CELLS as f64)
            .collect();
        let like = |x: f64| (-0.5 * delta(x).max(0.0)).exp();
        let l_left: Vec<f64> = left.iter().map(|&x| like(x)).collect();
        let l_right: Vec<f64> = right.iter().map(|&x| like(x)).collect();
        let (sigma_minus, sigma_plus) = hpd_bounds(&left, &l_left, &right, &l_right, LIKELIHOOD_MASS);

        let (chi2, amplitude) = self.chi2(h);
        Ok(ExponentFit {
            q,
            h,
            sigma_minus,
            sigma_plus,
            amplitude,
            chi2: chi2.max(0.0),
            n_scales: self.len(),
            truncated: lo_trunc || hi_trunc || on_boundary,
        })
    }
}

/// Grows an interval from the peak (`left.last() == right[0]`) by always
/// taking the more likely neighbouring cell until `mass` is enclosed.
fn hpd_bounds(left: &[f64], l_left: &[f64], right: &[f64], l_right: &[f64], mass: f64) -> (f64, f64) {
    let cell = |x: &[f64], l: &[f64], j: usize| ((x[j + 1] - x[j]).abs(), 0.5 * (l[j] + l[j + 1]));
    let n_left = left.len() - 1;
    let n_right = right.len() - 1;
    let total: f64 = (0..n_left)
        .map(|j| {
            let (w, l) = cell(left, l_left, j);
            w * l
        })
        .chain((0..n_right).map(|j| {
            let (w, l) = cell(right, l_right, j);
            w * l
        }))
        .sum();
    let peak = right[0];
    if !(total > 0.0) {
        return (0.0, 0.0);
    }
    let target = mass * total;
    let mut acc = 0.0;
    let mut li = n_left; // next left cell is li - 1
    let mut ri = 0; // next right cell is ri
    let mut lo = peak;
    let mut hi = peak;
    while li > 0 || ri < n_right {
        let take_left = match (li > 0, ri < n_right) {
            (true, true) => cell(left, l_left, li - 1).1 >= cell(right, l_right, ri).1,
            (l, _) => l,
        };
        let (w, l) = if take_left {
            cell(left, l_left, li - 1)
        } else {
            cell(right, l_right, ri)
        };
        let m = w * l;
        if acc + m >= target {
            let frac = if m > 0.0 { (target - acc) / m } else { 1.0 };
            if take_left {
                lo = left[li] - frac * w;
            } else {
                hi = right[ri] + frac * w;
            }
            break;
        }
        acc += m;
        if take_left {
            li -= 1;
            lo = left[li];
        } else {
            ri += 1;
            hi = right[ri];
        }
    }
    ((peak - lo).max(0.0), (hi - peak).max(0.0))
}

/// Brent's parabolic-interpolation minimizer on `[a, c]` seeded at `b`.
fn brent_minimize(f: impl Fn(f64) -> f64, a: f64, b: f64, c: f64) -> (f64, f64) {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut c) = (a.min(c), a.max(c));
    let mut x = b;
    let mut w = b;
    let mut v = b;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..200 {
        let m = 0.5 * (a + c);
        let tol = 1e-15 * x.abs() + 1e-16;
        let tol2 = 2.0 * tol;
        if (x - m).abs() <= tol2 - 0.5 * (c - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (c - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || c - u < tol2 {
                    d = if x < m { tol } else { -tol };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { c - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol { x + d } else { x + tol.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                c = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                c = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Ordinary least-squares slope and intercept of `ln F` on `ln s`.
pub fn ols_log_slope(scales: &[f64], f: &[f64]) -> (f64, f64) {
    let xs: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = f.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn window_indices(surface: &FluctuationSurface, window: Option<(usize, usize)>) -> Vec<usize> {
    surface
        .scales()
        .iter()
        .enumerate()
        .filter(|(_, &s)| match (window, surface.length) {
            (Some((lo, hi)), _) => s >= lo && s <= hi,
            (None, Some(t)) => s * MIN_FIT_SEGMENTS <= t,
            (None, None) => true,
        })
        .map(|(i, _)| i)
        .collect()
}

fn row_problem(surface: &FluctuationSurface, qi: usize, idx: &[usize]) -> PowerLawProblem {
    let scales: Vec<f64> = idx.iter().map(|&i| surface.scales()[i] as f64).collect();
    let f: Vec<f64> = idx.iter().map(|&i| surface.f(qi, i)).collect();
    let sigma: Vec<f64> = idx.iter().map(|&i| surface.sigma(qi, i)).collect();
    PowerLawProblem::new(&scales, &f, &sigma)
}

/// Fits `h(q)` for every moment of the surface with default options.
pub fn fit_scaling(surface: &FluctuationSurface, window: Option<(usize, usize)>) -> Result<ScalingFit> {
    fit_scaling_with(
        surface,
        &FitOptions {
            window,
            ..FitOptions::default()
        },
    )
}

pub fn fit_scaling_with(surface: &FluctuationSurface, opts: &FitOptions) -> Result<ScalingFit> {
    let idx = window_indices(surface, opts.window);
    if idx.len() < 3 {
        return Err(Error::TooFewScales(idx.len()));
    }
    let records = par::map_range(surface.qs().len(), |qi| {
        let problem = row_problem(surface, qi, &idx);
        if problem.is_empty() && surface.sigma_row(qi).iter().all(|s| *s == 0.0) {
            return Err(Error::Degenerate(format!(
                "all dispersions are zero at q = {}; likelihood is undefined",
                surface.qs()[qi]
            )));
        }
        problem.fit(surface.qs()[qi], opts)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let warnings = records
        .iter()
        .filter(|r| r.truncated)
        .map(|r| format!("q {}: likelihood truncated at the h-grid bounds", r.q))
        .collect();
    Ok(ScalingFit {
        records,
        s_lo: surface.scales()[idx[0]],
        s_hi: surface.scales()[*idx.last().expect("non-empty")],
        mode: surface.mode,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossoverReport {
    pub q: f64,
    /// First scale of the upper segment of the best split.
    pub breakpoint: Option<usize>,
    pub chi2_single: f64,
    pub chi2_split: f64,
    /// `1 - chi2_split / chi2_single`.
    pub improvement: f64,
    /// `|h_above - h_below|` in units of the combined nominal slope error.
    pub slope_change_sigmas: f64,
    pub h_below: Option<f64>,
    pub h_above: Option<f64>,
    pub flagged: bool,
}

/// Two-segment piecewise power-law fit over every interior breakpoint.
///
/// A crossover is flagged when the best split lowers chi-square by more than
/// `threshold` (fractional) and the slopes on either side differ by more than
/// [`CROSSOVER_MIN_SIGMAS`] nominal errors. The nominal errors treat scales as
/// independent, which they are not, so noise alone routinely reaches several
/// sigma; the reduction alone flags a third or more of plain fGn series.
pub fn detect_crossover(surface: &FluctuationSurface, q: f64, threshold: f64) -> Result<CrossoverReport> {
    let qi = surface
        .qs()
        .iter()
        .position(|&v| v == q)
        .ok_or(Error::MissingMoment(q))?;
    let idx = window_indices(surface, None);
    let problem = row_problem(surface, qi, &idx);
    if problem.len() < 8 {
        return Err(Error::TooFewScales(problem.len()));
    }
    let opts = FitOptions::default();
    let chi2_single = problem.minimize(&opts).1;

    let sub = |range: std::ops::Range<usize>| PowerLawProblem {
        ln_s: problem.ln_s[range.clone()].to_vec(),
        f: problem.f[range.clone()].to_vec(),
        weight: problem.weight[range].to_vec(),
    };
    let n = problem.len();
    let splits: Vec<usize> = (3..=n - 3).collect();
    let fits = par::map(&splits, |&b| {
        (b, sub(0..b).minimize(&opts).1 + sub(b..n).minimize(&opts).1)
    });
    let best = fits
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least two splits");
    let improvement = if chi2_single > 0.0 {
        1.0 - best.1 / chi2_single
    } else {
        0.0
    };
    let (lower, upper) = (sub(0..best.0).fit(q, &opts)?, sub(best.0..n).fit(q, &opts)?);
    let spread = lower.sigma().hypot(upper.sigma());
    let slope_change_sigmas = if spread > 0.0 {
        (upper.h - lower.h).abs() / spread
    } else {
        f64::INFINITY
    };
    Ok(CrossoverReport {
        q,
        breakpoint: Some(problem.ln_s[best.0].exp().round() as usize),
        chi2_single,
        chi2_split: best.1,
        improvement,
        h_below: Some(lower.h),
        h_above: Some(upper.h),
        slope_change_sigmas,
        flagged: improvement > threshold && slope_change_sigmas > CROSSOVER_MIN_SIGMAS,
    })
}
