//! Synthetic processes with known scaling exponents.
//!
//! Every generator draws from ChaCha8 seeded with `seed_from_u64(seed)`, so a
//! [`GeneratorSpec`] reproduces bit-identical output on any platform.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::Series;

pub const MIN_LENGTH: usize = 1 << 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    Fgn {
        hurst: f64,
    },
    Fbm {
        hurst: f64,
    },
    /// Multipliers `{a, 1-a}`; depth is `log2(length)`. With `shuffle` the
    /// heavier child is chosen at random at every split.
    BinomialCascade {
        a: f64,
        shuffle: bool,
    },
    CorrelatedGaussianPair {
        rho: f64,
    },
    /// `amplitude * sin(2 pi t / period)` plus unit-variance fGn.
    SinusoidPlusNoise {
        amplitude: f64,
        period: f64,
        hurst: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    pub length: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Generated {
    Single(Series),
    Pair(Series, Series),
}

impl Generated {
    pub fn into_series(self) -> Vec<Series> {
        match self {
            Generated::Single(s) => vec![s],
            Generated::Pair(x, y) => vec![x, y],
        }
    }
}

impl GeneratorSpec {
    pub fn fgn(hurst: f64, length: usize, seed: u64) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::Fgn { hurst },
            length,
            seed,
        }
    }

    pub fn fbm(hurst: f64, length: usize, seed: u64) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::Fbm { hurst },
            length,
            seed,
        }
    }

    pub fn cascade(a: f64, depth: u32, seed: u64) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::BinomialCascade { a, shuffle: false },
            length: 1usize.checked_shl(depth).unwrap_or(0),
            seed,
        }
    }

    pub fn correlated_pair(rho: f64, length: usize, seed: u64) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::CorrelatedGaussianPair { rho },
            length,
            seed,
        }
    }

    pub fn sinusoid(amplitude: f64, period: f64, hurst: f64, length: usize, seed: u64) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::SinusoidPlusNoise {
                amplitude,
                period,
                hurst,
            },
            length,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.length < MIN_LENGTH || !self.length.is_power_of_two() {
            return bad(format!("length {} must be a power of two >= {MIN_LENGTH}", self.length));
        }
        let hurst_ok = |h: f64| h > 0.0 && h < 1.0;
        match self.kind {
            GeneratorKind::Fgn { hurst } | GeneratorKind::Fbm { hurst } if !hurst_ok(hurst) => {
                bad(format!("Hurst exponent {hurst} outside (0, 1)"))
            }
            GeneratorKind::BinomialCascade { a, .. } if !(a > 0.5 && a < 1.0) => {
                bad(format!("cascade multiplier {a} outside (0.5, 1)"))
            }
            GeneratorKind::CorrelatedGaussianPair { rho } if !(rho > -1.0 && rho < 1.0) => {
                bad(format!("correlation {rho} outside (-1, 1)"))
            }
            GeneratorKind::SinusoidPlusNoise {
                amplitude,
                period,
                hurst,
            } => {
                if !amplitude.is_finite() || !(period > 0.0 && period.is_finite()) || !hurst_ok(hurst) {
                    bad(format!(
                        "invalid sinusoid parameters (amplitude {amplitude}, period {period}, H {hurst})"
                    ))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Series id used by [`generate`], e.g. `fgn_h0.7_s3`.
    pub fn name(&self) -> String {
        let s = self.seed;
        match self.kind {
            GeneratorKind::Fgn { hurst } => format!("fgn_h{hurst}_s{s}"),
            GeneratorKind::Fbm { hurst } => format!("fbm_h{hurst}_s{s}"),
            GeneratorKind::BinomialCascade { a, .. } => format!("cascade_a{a}_s{s}"),
            GeneratorKind::CorrelatedGaussianPair { rho } => format!("pair_r{rho}_s{s}"),
            GeneratorKind::SinusoidPlusNoise { amplitude, period, .. } => {
                format!("sine_a{amplitude}_p{period}_s{s}")
            }
        }
    }
}

pub fn generate(spec: &GeneratorSpec) -> Result<Generated> {
    spec.validate()?;
    let n = spec.length;
    let name = spec.name();
    let single = |v: Vec<f64>| Series::new(name.clone(), v).map(Generated::Single);
    match spec.kind {
        GeneratorKind::Fgn { hurst } => single(fgn(hurst, n, spec.seed)?),
        GeneratorKind::Fbm { hurst } => single(fbm(hurst, n, spec.seed)?),
        GeneratorKind::BinomialCascade { a, shuffle } => {
            single(binomial_cascade(a, n.trailing_zeros(), shuffle, spec.seed)?)
        }
        GeneratorKind::CorrelatedGaussianPair { rho } => {
            let (x, y) = correlated_pair(rho, n, spec.seed)?;
            Ok(Generated::Pair(
                Series::new(format!("{name}_x"), x)?,
                Series::new(format!("{name}_y"), y)?,
            ))
        }
        GeneratorKind::SinusoidPlusNoise {
            amplitude,
            period,
            hurst,
        } => {
            let mut v = fgn(hurst, n, spec.seed)?;
            for (t, x) in v.iter_mut().enumerate() {
                *x += amplitude * (2.0 * PI * t as f64 / period).sin();
            }
            single(v)
        }
    }
}

fn fgn_autocovariance(hurst: f64, k: usize) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Unit-variance fractional Gaussian noise by circulant embedding
/// (Davies–Harte) of its exact autocovariance.
pub fn fgn(hurst: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::InvalidInput(format!("Hurst exponent {hurst} outside (0, 1)")));
    }
    if n < 2 {
        return Err(Error::InvalidInput("fGn needs at least 2 points".into()));
    }
    let m = 2 * n;
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);

    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let k = if j <= n { j } else { m - j };
            Complex::new(fgn_autocovariance(hurst, k), 0.0)
        })
        .collect();
    fft.process(&mut row);
    let scale = m as f64;
    let mut sqrt_eig = Vec::with_capacity(m);
    for c in &row {
        let lambda = c.re;
        if lambda < -1e-8 * scale {
            return Err(Error::Degenerate(format!(
                "circulant embedding is not non-negative definite (eigenvalue {lambda})"
            )));
        }
        sqrt_eig.push((lambda.max(0.0) / scale).sqrt());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w: Vec<Complex<f64>> = sqrt_eig
        .iter()
        .map(|&s| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex::new(s * re, s * im)
        })
        .collect();
    fft.process(&mut w);
    Ok(w[..n].iter().map(|c| c.re).collect())
}

/// Fractional Brownian motion as the running sum of [`fgn`].
pub fn fbm(hurst: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let mut acc = 0.0;
    Ok(fgn(hurst, n, seed)?
        .into_iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect())
}

/// Binomial multiplicative measure on `2^depth` cells with total mass 1.
pub fn binomial_cascade(a: f64, depth: u32, shuffle: bool, seed: u64) -> Result<Vec<f64>> {
    if !(a > 0.5 && a < 1.0) {
        return Err(Error::InvalidInput(format!("cascade multiplier {a} outside (0.5, 1)")));
    }
    if depth == 0 || depth > 30 {
        return Err(Error::InvalidInput(format!("cascade depth {depth} outside 1..=30")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mass = vec![1.0];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(mass.len() * 2);
        for &m in &mass {
            let left_heavy = !shuffle || rand::Rng::random::<bool>(&mut rng);
            let (l, r) = if left_heavy { (a, 1.0 - a) } else { (1.0 - a, a) };
            next.push(m * l);
            next.push(m * r);
        }
        mass = next;
    }
    Ok(mass)
}

/// Two unit-normal streams with correlation `rho`.
pub fn correlated_pair(rho: f64, n: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::InvalidInput(format!("correlation {rho} outside (-1, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (1.0 - rho * rho).sqrt();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        x.push(z1);
        y.push(rho * z1 + c * z2);
    }
    Ok((x, y))
}
