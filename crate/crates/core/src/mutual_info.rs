//! Mutual information by marginal equiquantization, the global correlation
//! coefficient, and a permutation-surrogate independence test.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;
use crate::series::MarketClass;

pub const DEFAULT_SURROGATES: usize = 199;
pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;

/// `max(4, floor(n^(1/3)))`, capped at 32.
pub fn default_bins(n: usize) -> usize {
    let mut b = (n as f64).cbrt().floor() as usize;
    while (b + 1).pow(3) <= n {
        b += 1;
    }
    while b > 0 && b.pow(3) > n {
        b -= 1;
    }
    b.clamp(4, 32)
}

/// Equal-probability cell index of every observation, from ranks with ties
/// broken by position.
pub fn equiquantize(values: &[f64], bins: usize) -> Result<Vec<usize>> {
    if bins < 2 {
        return Err(Error::InvalidInput("need at least 2 bins".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("values must be finite".into()));
    }
    if values.iter().all(|&v| v == values[0]) {
        return Err(Error::Degenerate("constant margin has no quantiles".into()));
    }
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut labels = vec![0; n];
    for (rank, &idx) in order.iter().enumerate() {
        labels[idx] = rank * bins / n;
    }
    Ok(labels)
}

/// Plug-in mutual information (nats) of two label sequences.
///
/// Terms are accumulated in a transpose-invariant order so that swapping
/// the arguments gives a bitwise-identical result.
fn mi_from_labels(lx: &[usize], ly: &[usize], bins: usize, counts: &mut [u32]) -> f64 {
    counts.iter_mut().for_each(|c| *c = 0);
    let mut mx = vec![0u32; bins];
    let mut my = vec![0u32; bins];
    for (&a, &b) in lx.iter().zip(ly) {
        counts[a * bins + b] += 1;
        mx[a] += 1;
        my[b] += 1;
    }
    let n = lx.len() as f64;
    let term = |i: usize, j: usize| {
        let c = counts[i * bins + j];
        if c == 0 {
            0.0
        } else {
            let c = c as f64;
            let ab = mx[i] as f64 * my[j] as f64;
            c / n * (c * n / ab).ln()
        }
    };
    let mut total = 0.0;
    for i in 0..bins {
        total += term(i, i);
        for j in i + 1..bins {
            total += term(i, j) + term(j, i);
        }
    }
    total.max(0.0)
}

fn check_lengths(x: &[f64], y: &[f64], bins: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "series lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if bins < 2 || x.len() < 10 * bins {
        return Err(Error::InvalidInput(format!(
            "{} observations are too few for {bins} bins (need 10 per bin)",
            x.len()
        )));
    }
    Ok(())
}

/// Mutual information in nats on a `bins x bins` equiquantized partition.
pub fn mutual_information(x: &[f64], y: &[f64], bins: usize) -> Result<f64> {
    check_lengths(x, y, bins)?;
    let lx = equiquantize(x, bins)?;
    let ly = equiquantize(y, bins)?;
    Ok(mi_from_labels(&lx, &ly, bins, &mut vec![0; bins * bins]))
}

/// Global correlation coefficient `sqrt(1 - exp(-2 I))`.
pub fn gcc(mi: f64) -> Result<f64> {
    if !(mi >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "mutual information must be non-negative, got {mi}"
        )));
    }
    Ok((-(-2.0 * mi).exp_m1()).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DependenceReport {
    pub mi: f64,
    pub gcc: f64,
    pub bins: usize,
    pub critical_value: f64,
    pub significance: f64,
    pub n_surrogates: usize,
    pub p_value: f64,
    pub reject: bool,
}

/// Tests `I(X,Y) = 0` against the `(1 - significance)` quantile of the
/// mutual information of `n_surrogates` permutations of `y`.
///
/// Surrogate `k` shuffles with ChaCha8 seeded by `seed` on stream `k`, so the
/// outcome does not depend on how surrogates are scheduled.
pub fn independence_test(
    x: &[f64],
    y: &[f64],
    bins: usize,
    n_surrogates: usize,
    significance: f64,
    seed: u64,
) -> Result<DependenceReport> {
    check_lengths(x, y, bins)?;
    if n_surrogates < 99 {
        return Err(Error::InvalidInput(format!(
            "need at least 99 surrogates, got {n_surrogates}"
        )));
    }
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::InvalidInput(format!(
            "significance {significance} outside (0, 1)"
        )));
    }
    let lx = equiquantize(x, bins)?;
    let ly = equiquantize(y, bins)?;
    let mi = mi_from_labels(&lx, &ly, bins, &mut vec![0; bins * bins]);

    let mut surrogates = par::map_range(n_surrogates, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let mut shuffled = ly.clone();
        shuffled.shuffle(&mut rng);
        mi_from_labels(&lx, &shuffled, bins, &mut vec![0; bins * bins])
    });
    let exceed = surrogates.iter().filter(|&&s| s >= mi).count();
    surrogates.sort_by(f64::total_cmp);
    let k = ((1.0 - significance) * (n_surrogates + 1) as f64).ceil() as usize;
    let critical_value = surrogates[k.clamp(1, n_surrogates) - 1];

    Ok(DependenceReport {
        mi,
        gcc: gcc(mi)?,
        bins,
        critical_value,
        significance,
        n_surrogates,
        p_value: (1 + exceed) as f64 / (n_surrogates + 1) as f64,
        reject: mi > critical_value,
    })
}

/// Class-pair groups in reporting order.
pub const GROUP_KEYS: [&str; 6] = ["dd", "de", "ee", "ef", "ff", "df"];

/// Unordered class-pair key such as `de`; `None` when a class is unknown.
pub fn group_key(a: MarketClass, b: MarketClass) -> Option<&'static str> {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    use MarketClass::*;
    match (lo, hi) {
        (Developed, Developed) => Some("dd"),
        (Developed, Emerging) => Some("de"),
        (Emerging, Emerging) => Some("ee"),
        (Emerging, Frontier) => Some("ef"),
        (Frontier, Frontier) => Some("ff"),
        (Developed, Frontier) => Some("df"),
        _ => None,
    }
}

/// Descriptive statistics of one group; `None` renders as a blank cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub key: &'static str,
    pub n: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub sd: Option<f64>,
    /// Fourth standardized moment.
    pub kurtosis_raw: Option<f64>,
    pub kurtosis_excess: Option<f64>,
    pub skewness: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTable {
    pub groups: Vec<GroupStats>,
    pub warnings: Vec<String>,
}

fn describe(key: &'static str, values: &mut [f64], warnings: &mut Vec<String>) -> GroupStats {
    let n = values.len();
    if n == 0 {
        return GroupStats {
            key,
            n,
            mean: None,
            median: None,
            sd: None,
            kurtosis_raw: None,
            kurtosis_excess: None,
            skewness: None,
            min: None,
            max: None,
        };
    }
    values.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let median = if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    };
    let moment = |k: i32| values.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / nf;
    let (m2, m3, m4) = (moment(2), moment(3), moment(4));
    let sd = if n > 1 { (m2 * nf / (nf - 1.0)).sqrt() } else { 0.0 };
    let (kurtosis_raw, skewness) = if m2 > 0.0 {
        (Some(m4 / (m2 * m2)), Some(m3 / m2.powf(1.5)))
    } else {
        warnings.push(format!("group {key}: zero variance, kurtosis and skewness undefined"));
        (None, None)
    };
    GroupStats {
        key,
        n,
        mean: Some(mean),
        median: Some(median),
        sd: Some(sd),
        kurtosis_raw,
        kurtosis_excess: kurtosis_raw.map(|k| k - 3.0),
        skewness,
        min: values.first().copied(),
        max: values.last().copied(),
    }
}

/// Groups GCC values by market-class pair and describes each group.
pub fn gcc_group_stats(entries: &[(MarketClass, MarketClass, f64)]) -> GroupTable {
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); GROUP_KEYS.len()];
    let mut unclassified = 0;
    for &(a, b, v) in entries {
        match group_key(a, b).and_then(|k| GROUP_KEYS.iter().position(|g| *g == k)) {
            Some(g) => buckets[g].push(v),
            None => unclassified += 1,
        }
    }
    let mut warnings = Vec::new();
    if unclassified > 0 {
        warnings.push(format!(
            "{unclassified} pair(s) with an unknown market class were skipped"
        ));
    }
    let groups = GROUP_KEYS
        .iter()
        .zip(buckets.iter_mut())
        .map(|(key, values)| describe(key, values, &mut warnings))
        .collect();
    GroupTable { groups, warnings }
}
