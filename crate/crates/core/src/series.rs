//! Series, standardization and cumulative profiles.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Market development class used to group dependence statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarketClass {
    Developed,
    Emerging,
    Frontier,
    #[default]
    Unknown,
}

impl MarketClass {
    /// One-letter code used in class-pair keys (`dd`, `de`, ...).
    pub fn code(self) -> char {
        match self {
            MarketClass::Developed => 'd',
            MarketClass::Emerging => 'e',
            MarketClass::Frontier => 'f',
            MarketClass::Unknown => 'u',
        }
    }
}

impl fmt::Display for MarketClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MarketClass::Developed => "developed",
            MarketClass::Emerging => "emerging",
            MarketClass::Frontier => "frontier",
            MarketClass::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

impl FromStr for MarketClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "developed" | "d" => Ok(MarketClass::Developed),
            "emerging" | "e" => Ok(MarketClass::Emerging),
            "frontier" | "f" => Ok(MarketClass::Frontier),
            "unknown" | "u" | "" => Ok(MarketClass::Unknown),
            other => Err(Error::InvalidInput(format!("unknown market class {other:?}"))),
        }
    }
}

/// An ordered sequence of finite observations for one market.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub id: String,
    pub label: String,
    pub class: MarketClass,
    values: Vec<f64>,
}

impl Series {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "series {id} has {} observations, need at least 2",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "series {id} has a non-finite value at position {pos}"
            )));
        }
        Ok(Self {
            label: id.clone(),
            id,
            class: MarketClass::Unknown,
            values,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_class(mut self, class: MarketClass) -> Self {
        self.class = class;
        self
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

    /// Natural logarithm of every observation; levels must be positive.
    pub fn log_transform(&self) -> Result<Series> {
        if let Some(pos) = self.values.iter().position(|&v| v <= 0.0) {
            return Err(Error::InvalidInput(format!(
                "series {} has a non-positive value at position {pos}; cannot log-transform",
                self.id
            )));
        }
        Ok(Series {
            values: self.values.iter().map(|v| v.ln()).collect(),
            ..self.clone()
        })
    }
}

/// Series rescaled to zero sample mean and unit sample variance.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedSeries {
    pub source_id: String,
    values: Vec<f64>,
}

impl StandardizedSeries {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Sample mean and sample variance (denominator `n - 1`).
pub(crate) fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// Rescales a series to zero mean and unit variance.
pub fn standardize(series: &Series) -> Result<StandardizedSeries> {
    standardize_values(&series.id, series.values())
}

pub(crate) fn standardize_values(id: &str, values: &[f64]) -> Result<StandardizedSeries> {
    if values.len() < 2 {
        return Err(Error::InvalidInput(format!("series {id} is too short to standardize")));
    }
    let (mean, variance) = mean_and_variance(values);
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::Degenerate(format!("series {id} has zero variance")));
    }
    let sd = variance.sqrt();
    let values: Vec<f64> = values.iter().map(|v| (v - mean) / sd).collect();
    // A constant series can survive the variance check through rounding
    // when the spread is at the last bit; catch it here.
    if values.iter().all(|&v| v == values[0]) {
        return Err(Error::Degenerate(format!("series {id} is constant")));
    }
    Ok(StandardizedSeries {
        source_id: id.to_string(),
        values,
    })
}

/// Cumulative sum of a (mean-zero) series.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub source_id: String,
    values: Vec<f64>,
}

impl Profile {
    /// Wraps already-integrated values. Useful for constructed inputs.
    pub fn new(source_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let source_id = source_id.into();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "profile {source_id} has non-finite values"
            )));
        }
        Ok(Self { source_id, values })
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

    /// Elementwise negation, used to build anti-correlated pairs.
    pub fn negated(&self) -> Profile {
        Profile {
            source_id: self.source_id.clone(),
            values: self.values.iter().map(|v| -v).collect(),
        }
    }
}

pub fn build_profile(series: &StandardizedSeries) -> Profile {
    let mut acc = 0.0;
    let values = series
        .values
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    Profile {
        source_id: series.source_id.clone(),
        values,
    }
}

/// Standardizes and integrates in one step.
pub fn profile_of(series: &Series) -> Result<Profile> {
    Ok(build_profile(&standardize(series)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(values: &[f64]) -> Series {
        Series::new("x", values.to_vec()).unwrap()
    }

    #[test]
    fn standardize_small_example() {
        let z = standardize(&series(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(z.values(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let err = standardize(&series(&[5.0, 5.0, 5.0])).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn rejects_short_and_non_finite() {
        assert!(Series::new("x", vec![1.0]).is_err());
        assert!(Series::new("x", vec![1.0, f64::NAN]).is_err());
        assert!(Series::new("x", vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn profile_examples() {
        let z = StandardizedSeries {
            source_id: "x".into(),
            values: vec![-1.0, 0.0, 1.0],
        };
        assert_eq!(build_profile(&z).values(), &[-1.0, -1.0, 0.0]);

        let zeros = StandardizedSeries {
            source_id: "z".into(),
            values: vec![0.0; 7],
        };
        assert!(build_profile(&zeros).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn class_parsing() {
        assert_eq!("Developed".parse::<MarketClass>().unwrap(), MarketClass::Developed);
        assert_eq!("f".parse::<MarketClass>().unwrap(), MarketClass::Frontier);
        assert!("martian".parse::<MarketClass>().is_err());
    }

    #[test]
    fn log_transform_requires_positive_levels() {
        assert!(series(&[1.0, 0.0]).log_transform().is_err());
        let l = series(&[1.0, std::f64::consts::E]).log_transform().unwrap();
        assert_eq!(l.values(), &[0.0, 1.0]);
    }

    fn finite_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1e3f64..1e3, 3..200).prop_filter("needs spread", |v| {
            let (_, var) = mean_and_variance(v);
            var > 1e-6
        })
    }

    proptest! {
        #[test]
        fn standardized_moments(v in finite_vec()) {
            let z = standardize(&series(&v)).unwrap();
            let (m, var) = mean_and_variance(z.values());
            prop_assert!(m.abs() < 1e-12);
            prop_assert!((var - 1.0).abs() < 1e-9);
        }

        #[test]
        fn standardize_is_idempotent(v in finite_vec()) {
            let once = standardize(&series(&v)).unwrap();
            let twice = standardize(&series(once.values())).unwrap();
            for (a, b) in once.values().iter().zip(twice.values()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn standardize_is_affine_invariant(v in finite_vec(), a in 0.1f64..10.0, b in -100.0f64..100.0) {
            let base = standardize(&series(&v)).unwrap();
            let moved: Vec<f64> = v.iter().map(|x| a * x + b).collect();
            let other = standardize(&series(&moved)).unwrap();
            for (p, q) in base.values().iter().zip(other.values()) {
                prop_assert!((p - q).abs() < 1e-8);
            }
        }

        #[test]
        fn profile_is_linear(pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..100)) {
            let wrap = |values: Vec<f64>| StandardizedSeries { source_id: "s".into(), values };
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let sum: Vec<f64> = pairs.iter().map(|p| p.0 + p.1).collect();
            let px = build_profile(&wrap(x.clone()));
            let py = build_profile(&wrap(y));
            let ps = build_profile(&wrap(sum));
            for i in 0..x.len() {
                prop_assert!((ps.values()[i] - px.values()[i] - py.values()[i]).abs() < 1e-9);
            }
            let neg = build_profile(&wrap(x.iter().map(|v| -v).collect()));
            for (a, b) in neg.values().iter().zip(px.values()) {
                prop_assert_eq!(*a, -*b);
            }
        }

        #[test]
        fn profile_of_zero_mean_ends_at_zero(v in finite_vec()) {
            let p = profile_of(&series(&v)).unwrap();
            prop_assert!(p.values().last().unwrap().abs() < 1e-9);
        }
    }
}
