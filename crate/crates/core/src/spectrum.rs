//! Mass exponents, Hölder exponents and the singularity spectrum.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::ScalingFit;

/// Dimension of the geometric support for one-dimensional series.
pub const SUPPORT_DIMENSION: f64 = 1.0;

/// `tau(q) = q h(q) - 1` for every fitted moment.
pub fn tau_spectrum(fit: &ScalingFit) -> Result<Vec<(f64, f64)>> {
    if fit.records.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "tau spectrum needs at least 3 moments, fit has {}",
            fit.records.len()
        )));
    }
    Ok(fit
        .records
        .iter()
        .map(|r| (r.q, r.q * r.h - SUPPORT_DIMENSION))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumPoint {
    pub q: f64,
    pub tau: f64,
    pub alpha: f64,
    pub f_alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularitySpectrum {
    pub points: Vec<SpectrumPoint>,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub delta_alpha: f64,
    pub warnings: Vec<String>,
}

/// Derivative on a possibly non-uniform grid: three-point formula in the
/// interior (exact for quadratics), one-sided differences at the ends.
fn derivative(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (y[1] - y[0]) / (x[1] - x[0])
            } else if i == n - 1 {
                (y[n - 1] - y[n - 2]) / (x[n - 1] - x[n - 2])
            } else {
                let hl = x[i] - x[i - 1];
                let hr = x[i + 1] - x[i];
                (hl * hl * y[i + 1] - hr * hr * y[i - 1] + (hr * hr - hl * hl) * y[i]) / (hl * hr * (hl + hr))
            }
        })
        .collect()
}

/// Legendre transform of `tau(q)`: `alpha = dtau/dq`, `f = q alpha - tau`.
///
/// `alpha_min` and `alpha_max` are the extremes over the grid, which for a
/// concave `tau` are the values at the largest and smallest `q`.
pub fn singularity_spectrum(tau: &[(f64, f64)]) -> Result<SingularitySpectrum> {
    if tau.len() < 3 {
        return Err(Error::InvalidInput(
            "singularity spectrum needs at least 3 moments".into(),
        ));
    }
    let qs: Vec<f64> = tau.iter().map(|p| p.0).collect();
    if qs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("q-grid must be strictly increasing".into()));
    }
    let taus: Vec<f64> = tau.iter().map(|p| p.1).collect();
    let alpha = derivative(&qs, &taus);
    let points: Vec<SpectrumPoint> = (0..qs.len())
        .map(|i| SpectrumPoint {
            q: qs[i],
            tau: taus[i],
            alpha: alpha[i],
            f_alpha: qs[i] * alpha[i] - taus[i],
        })
        .collect();
    let mut warnings = Vec::new();
    let rising: Vec<String> = alpha
        .windows(2)
        .zip(&qs)
        .filter(|(w, _)| w[1] > w[0] + 1e-9)
        .map(|(_, q)| q.to_string())
        .collect();
    if !rising.is_empty() {
        warnings.push(format!(
            "tau(q) is not concave: alpha increases after q = {}",
            rising.join(", ")
        ));
    }
    let alpha_min = alpha.iter().copied().fold(f64::INFINITY, f64::min);
    let alpha_max = alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SingularitySpectrum {
        points,
        alpha_min,
        alpha_max,
        delta_alpha: alpha_max - alpha_min,
        warnings,
    })
}

/// `tau_hat(q) = q alpha(q) - f(q)`, undoing the forward transform point by point.
pub fn legendre_reconstruct(spectrum: &SingularitySpectrum) -> Vec<f64> {
    spectrum.points.iter().map(|p| p.q * p.alpha - p.f_alpha).collect()
}

/// Discrete inverse transform `min_j [q_i alpha_j - f_j]`. Equals `tau` where
/// `tau` is concave; the gap measures how far estimation noise breaks concavity.
pub fn legendre_envelope(spectrum: &SingularitySpectrum) -> Vec<f64> {
    spectrum
        .points
        .iter()
        .map(|pi| {
            spectrum
                .points
                .iter()
                .map(|pj| pi.q * pj.alpha - pj.f_alpha)
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Error bound for [`legendre_reconstruct`]: `2 * max(dq) * max|dalpha/dq|`.
pub fn legendre_tolerance(spectrum: &SingularitySpectrum) -> f64 {
    let qs: Vec<f64> = spectrum.points.iter().map(|p| p.q).collect();
    let alpha: Vec<f64> = spectrum.points.iter().map(|p| p.alpha).collect();
    let step = qs.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let curvature = derivative(&qs, &alpha).into_iter().map(f64::abs).fold(0.0, f64::max);
    2.0 * step * curvature
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `h(2) > 1`: fBm-like, `H = h(2) - 1`.
    NonStationary,
    /// `h(2) <= 1`: fGn-like, `H = h(2)`.
    Stationary,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::NonStationary => "non_stationary",
            Branch::Stationary => "stationary",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedExponents {
    pub h2: f64,
    pub hurst: f64,
    /// Correlation exponent.
    pub gamma: f64,
    /// Power-spectrum exponent.
    pub beta: f64,
    pub branch: Branch,
}

impl DerivedExponents {
    pub fn from_h2(h2: f64) -> Self {
        if h2 > 1.0 {
            let hurst = h2 - 1.0;
            Self {
                h2,
                hurst,
                gamma: -2.0 * hurst,
                beta: 2.0 * hurst + 1.0,
                branch: Branch::NonStationary,
            }
        } else {
            Self {
                h2,
                hurst: h2,
                gamma: 2.0 - 2.0 * h2,
                beta: 2.0 * h2 - 1.0,
                branch: Branch::Stationary,
            }
        }
    }
}

/// Hurst, correlation and power-spectrum exponents from `h(2)`.
pub fn derived_exponents(fit: &ScalingFit) -> Result<DerivedExponents> {
    fit.h(2.0)
        .map(DerivedExponents::from_h2)
        .ok_or(Error::MissingMoment(2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixedPairPoint {
    pub q: f64,
    /// `h_xy(q) - (h_xx(q) + h_yy(q)) / 2`.
    pub delta: f64,
    pub sigma: f64,
    pub significant: bool,
}

/// Deviation of the cross exponent from the mean of the two auto exponents.
pub fn mixed_pair_check(fit_xx: &ScalingFit, fit_yy: &ScalingFit, fit_xy: &ScalingFit) -> Result<Vec<MixedPairPoint>> {
    let qs = fit_xy.qs();
    if fit_xx.qs() != qs || fit_yy.qs() != qs {
        return Err(Error::GridMismatch);
    }
    Ok(fit_xx
        .records
        .iter()
        .zip(&fit_yy.records)
        .zip(&fit_xy.records)
        .map(|((xx, yy), xy)| {
            let delta = xy.h - (xx.h + yy.h) / 2.0;
            let sigma = (xy.sigma().powi(2) + (xx.sigma().powi(2) + yy.sigma().powi(2)) / 4.0).sqrt();
            MixedPairPoint {
                q: xy.q,
                delta,
                sigma,
                significant: delta.abs() > sigma,
            }
        })
        .collect())
}

/// Everything derived from one scaling fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultifractalSummary {
    pub spectrum: SingularitySpectrum,
    pub exponents: Option<DerivedExponents>,
}

impl MultifractalSummary {
    pub fn delta_alpha(&self) -> f64 {
        self.spectrum.delta_alpha
    }
}

pub fn summarize(fit: &ScalingFit) -> Result<MultifractalSummary> {
    let spectrum = singularity_spectrum(&tau_spectrum(fit)?)?;
    Ok(MultifractalSummary {
        spectrum,
        exponents: derived_exponents(fit).ok(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::ExponentFit;
    use crate::fluctuation::Mode;

    fn fit_from(qs: &[f64], h: impl Fn(f64) -> f64, sigma: f64) -> ScalingFit {
        ScalingFit {
            records: qs
                .iter()
                .map(|&q| ExponentFit {
                    q,
                    h: h(q),
                    sigma_minus: sigma,
                    sigma_plus: sigma,
                    amplitude: 1.0,
                    chi2: 0.0,
                    n_scales: 10,
                    truncated: false,
                })
                .collect(),
            s_lo: 10,
            s_hi: 1000,
            mode: Mode::Auto,
            warnings: Vec::new(),
        }
    }

    fn default_qs() -> Vec<f64> {
        crate::fluctuation::QGrid::default().values().to_vec()
    }

    #[test]
    fn monofractal_tau_is_linear() {
        let fit = fit_from(&default_qs(), |_| 0.5, 0.0);
        for (q, tau) in tau_spectrum(&fit).unwrap() {
            assert_eq!(tau, 0.5 * q - 1.0);
        }
        let spec = summarize(&fit).unwrap().spectrum;
        assert!(spec.delta_alpha.abs() < 1e-12);
        for p in &spec.points {
            assert!((p.alpha - 0.5).abs() < 1e-12);
            assert!((p.f_alpha - 1.0).abs() < 1e-12);
        }
        assert!(spec.warnings.is_empty());
    }

    #[test]
    fn non_stationary_branch_arithmetic() {
        // h(2) = 1.531 -> tau(2) = 2 * 1.531 - 1 = 2.062.
        let fit = fit_from(&[1.0, 2.0, 3.0], |_| 1.531, 0.0);
        let tau = tau_spectrum(&fit).unwrap();
        assert!((tau[1].1 - 2.062).abs() < 1e-12);

        let d = DerivedExponents::from_h2(1.571);
        assert!((d.hurst - 0.571).abs() < 1e-12);
        assert!((d.gamma + 1.142).abs() < 1e-12);
        assert!((d.beta - 2.142).abs() < 1e-12);
        assert_eq!(d.branch, Branch::NonStationary);
    }

    #[test]
    fn white_noise_branch() {
        let d = DerivedExponents::from_h2(0.5);
        assert_eq!(d.branch, Branch::Stationary);
        assert_eq!((d.hurst, d.gamma, d.beta), (0.5, 1.0, 0.0));
        let missing = fit_from(&[1.0, 3.0, 4.0], |_| 0.5, 0.0);
        assert!(matches!(derived_exponents(&missing), Err(Error::MissingMoment(_))));
    }

    #[test]
    fn cascade_spectrum_width() {
        // Analytic binomial cascade: tau(q) = -log2(a^q + (1-a)^q).
        let a: f64 = 0.75;
        let tau: Vec<(f64, f64)> = default_qs()
            .into_iter()
            .map(|q| (q, -(a.powf(q) + (1.0 - a).powf(q)).log2()))
            .collect();
        let spec = singularity_spectrum(&tau).unwrap();
        let analytic = (a / (1.0 - a)).log2();
        assert!((spec.delta_alpha - analytic).abs() < 0.15, "{}", spec.delta_alpha);
        assert!(spec.points.iter().all(|p| p.f_alpha <= 1.0 + 1e-9));
        assert!(spec.warnings.is_empty());

        let rebuilt = legendre_reconstruct(&spec);
        let tol = legendre_tolerance(&spec);
        for (p, t) in spec.points.iter().zip(rebuilt) {
            assert!((p.tau - t).abs() < tol);
        }
        // Concave tau: the envelope touches every point.
        for (p, t) in spec.points.iter().zip(legendre_envelope(&spec)) {
            assert!((p.tau - t).abs() < 1e-12);
        }
    }

    #[test]
    fn three_point_derivative_is_exact_for_quadratics() {
        let x = [-3.0, -1.0, -0.5, 0.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 2.0 * v - 0.7 * v * v).collect();
        let d = derivative(&x, &y);
        for i in 1..x.len() - 1 {
            assert!((d[i] - (2.0 - 1.4 * x[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn non_concave_tau_warns_but_emits() {
        let tau = vec![(-1.0, -2.0), (0.0, -1.0), (1.0, 0.5), (2.0, 3.0)];
        let spec = singularity_spectrum(&tau).unwrap();
        assert_eq!(spec.points.len(), 4);
        assert!(!spec.warnings.is_empty());
        assert!(spec.delta_alpha >= 0.0);
    }

    #[test]
    fn mixed_pair_with_itself_is_exactly_zero() {
        let fit = fit_from(&default_qs(), |q| 0.8 + 0.1 / (1.0 + q * q), 0.01);
        let dev = mixed_pair_check(&fit, &fit, &fit).unwrap();
        assert!(dev.iter().all(|p| p.delta == 0.0 && !p.significant));
    }

    #[test]
    fn mixed_pair_error_propagation() {
        let qs = [1.0, 2.0, 3.0];
        let xx = fit_from(&qs, |_| 0.50, 0.004);
        let yy = fit_from(&qs, |_| 0.506, 0.004);
        let xy = fit_from(&qs, |_| 0.616, 0.007);
        let dev = mixed_pair_check(&xx, &yy, &xy).unwrap();
        assert!((dev[1].delta - 0.113).abs() < 1e-12);
        let expect = (0.007f64.powi(2) + (2.0 * 0.004f64.powi(2)) / 4.0).sqrt();
        assert!((dev[1].sigma - expect).abs() < 1e-15);
        assert!(dev[1].significant);

        let other = fit_from(&[1.0, 2.0], |_| 0.5, 0.0);
        assert!(matches!(mixed_pair_check(&xx, &other, &xy), Err(Error::GridMismatch)));
    }
}
