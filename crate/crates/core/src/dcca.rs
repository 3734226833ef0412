//! Detrended cross-correlation coefficient.
//!
//! `sigma(s) = F2_xy(s) / (F_xx(s) F_yy(s))`, where `F2_xy(s)` is the plain
//! mean of the signed segment covariances (the "square" is notation only)
//! and `F_xx(s) = sqrt(mean_m F_xx(s, m))`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fluctuation::{Detrender, ScaleGrid};
use crate::panel::Panel;
use crate::par;
use crate::series::{profile_of, Profile};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DccaProfile {
    pub scales: Vec<usize>,
    pub per_scale: Vec<f64>,
    /// Unweighted mean over scales.
    pub mean: f64,
    /// Sample standard deviation over scales.
    pub dispersion: f64,
}

/// Mean segment covariances `(xy, xx, yy)` at one scale.
fn mean_covariances(x: &[f64], y: &[f64], detrender: &Detrender) -> (f64, f64, f64) {
    let s = detrender.scale();
    let t = x.len();
    let per_dir = t / s;
    let mut rx = vec![0.0; s];
    let mut ry = vec![0.0; s];
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    let starts = (0..per_dir).map(|m| m * s).chain((0..per_dir).map(|m| t - (m + 1) * s));
    for start in starts {
        detrender.residuals(&x[start..start + s], &mut rx);
        detrender.residuals(&y[start..start + s], &mut ry);
        sxy += rx.iter().zip(&ry).map(|(a, b)| a * b).sum::<f64>() / s as f64;
        sxx += rx.iter().map(|a| a * a).sum::<f64>() / s as f64;
        syy += ry.iter().map(|b| b * b).sum::<f64>() / s as f64;
    }
    let n = (2 * per_dir) as f64;
    (sxy / n, sxx / n, syy / n)
}

pub fn dcca_coefficient(x: &Profile, y: &Profile, scales: &ScaleGrid, order: usize) -> Result<DccaProfile> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "profiles {} and {} differ in length",
            x.source_id, y.source_id
        )));
    }
    scales.validate(x.len(), order)?;
    let (xv, yv) = (x.values(), y.values());
    let per_scale = scales
        .scales()
        .iter()
        .map(|&s| {
            let (xy, xx, yy) = mean_covariances(xv, yv, &Detrender::new(s, order));
            let den = (xx * yy).sqrt();
            if !(den > 0.0) {
                return Err(Error::Degenerate(format!(
                    "zero detrended variance at scale {s} for {} / {}",
                    x.source_id, y.source_id
                )));
            }
            Ok(xy / den)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = per_scale.len() as f64;
    let mean = per_scale.iter().sum::<f64>() / n;
    let dispersion = if per_scale.len() > 1 {
        (per_scale.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(DccaProfile {
        scales: scales.scales().to_vec(),
        per_scale,
        mean,
        dispersion,
    })
}

/// Symmetric matrices of scale-averaged coefficients and their dispersions.
#[derive(Debug, Clone, PartialEq)]
pub struct DccaMatrix {
    pub ids: Vec<String>,
    pub sigma: Vec<Vec<f64>>,
    pub dispersion: Vec<Vec<f64>>,
    /// Failed pairs `(i, j, message)`; their entries are NaN.
    pub failures: Vec<(usize, usize, String)>,
}

pub fn dcca_matrix(panel: &Panel, scales: &ScaleGrid, order: usize) -> Result<DccaMatrix> {
    let n = panel.series().len();
    if n < 2 {
        return Err(Error::InvalidInput("DCCA matrix needs at least two series".into()));
    }
    let profiles: Vec<Result<Profile>> = panel.series().iter().map(profile_of).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let results = par::map(&pairs, |&(i, j)| match (&profiles[i], &profiles[j]) {
        (Ok(x), Ok(y)) => dcca_coefficient(x, y, scales, order).map_err(|e| e.to_string()),
        (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
    });

    let mut sigma = vec![vec![f64::NAN; n]; n];
    let mut dispersion = vec![vec![f64::NAN; n]; n];
    let mut failures = Vec::new();
    for i in 0..n {
        if profiles[i].is_ok() {
            sigma[i][i] = 1.0;
            dispersion[i][i] = 0.0;
        }
    }
    for (&(i, j), r) in pairs.iter().zip(results) {
        match r {
            Ok(p) => {
                sigma[i][j] = p.mean;
                sigma[j][i] = p.mean;
                dispersion[i][j] = p.dispersion;
                dispersion[j][i] = p.dispersion;
            }
            Err(msg) => failures.push((i, j, msg)),
        }
    }
    Ok(DccaMatrix {
        ids: panel.ids().into_iter().map(String::from).collect(),
        sigma,
        dispersion,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Series;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn profile(v: &[f64]) -> Profile {
        profile_of(&Series::new("p", v.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn self_pair_is_exactly_one() {
        let x = profile(&noise(1, 3000));
        let g = ScaleGrid::default_for(3000, 1).unwrap();
        let d = dcca_coefficient(&x, &x, &g, 1).unwrap();
        assert!(d.per_scale.iter().all(|&v| v == 1.0));
        assert_eq!(d.mean, 1.0);
        assert_eq!(d.dispersion, 0.0);

        let neg = dcca_coefficient(&x, &x.negated(), &g, 1).unwrap();
        assert!(neg.per_scale.iter().all(|&v| v == -1.0));
    }

    #[test]
    fn symmetric_antisymmetric_and_bounded() {
        let a = noise(2, 2000);
        let b: Vec<f64> = noise(3, 2000).iter().zip(&a).map(|(u, v)| u + 0.5 * v).collect();
        let (x, y) = (profile(&a), profile(&b));
        let g = ScaleGrid::default_for(2000, 1).unwrap();
        let xy = dcca_coefficient(&x, &y, &g, 1).unwrap();
        let yx = dcca_coefficient(&y, &x, &g, 1).unwrap();
        let xny = dcca_coefficient(&x, &y.negated(), &g, 1).unwrap();
        assert_eq!(xy, yx);
        for (p, n) in xy.per_scale.iter().zip(&xny.per_scale) {
            assert_eq!(*p, -*n);
            assert!(p.abs() <= 1.0 + 1e-9);
        }
        // corr(a, b + a/2) for independent unit normals is 0.5/sqrt(1.25) ~ 0.447.
        assert!((xy.mean - 0.447).abs() < 0.1, "{}", xy.mean);
    }

    #[test]
    fn matrix_of_copy_and_negation() {
        let v = noise(4, 1500);
        let series = vec![
            Series::new("a", v.clone()).unwrap(),
            Series::new("b", v.clone()).unwrap(),
            Series::new("c", v.iter().map(|x| -x).collect()).unwrap(),
        ];
        let panel = Panel::with_synthetic_calendar(series).unwrap();
        let g = ScaleGrid::default_for(1500, 1).unwrap();
        let m = dcca_matrix(&panel, &g, 1).unwrap();
        let expect = [[1.0, 1.0, -1.0], [1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]];
        assert_eq!(m.sigma, expect);
        assert!(m.dispersion.iter().flatten().all(|&d| d == 0.0));
        assert!(m.failures.is_empty());
    }

    #[test]
    fn degenerate_pairs_are_annotated_not_fatal() {
        let series = vec![
            Series::new("a", noise(5, 500)).unwrap(),
            Series::new("flat", vec![2.0; 500]).unwrap(),
            Series::new("c", noise(6, 500)).unwrap(),
        ];
        let panel = Panel::with_synthetic_calendar(series).unwrap();
        let g = ScaleGrid::default_for(500, 1).unwrap();
        let m = dcca_matrix(&panel, &g, 1).unwrap();
        assert_eq!(m.failures.len(), 2);
        assert!(m.sigma[0][1].is_nan());
        assert!(m.sigma[0][2].is_finite());
    }
}
