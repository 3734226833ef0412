//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Oracles are analytic or constructed
//! independently of the estimators.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mfdxa::dcca::dcca_coefficient;
use mfdxa::fit::{ols_log_slope, FitOptions, PowerLawProblem};
use mfdxa::generators::{binomial_cascade, correlated_pair, fbm, fgn};
use mfdxa::mutual_info::{gcc, independence_test, mutual_information};
use mfdxa::output::write_outputs;
use mfdxa::pipeline::{analyze_panel, load_configured_panel, RunConfig};
use mfdxa::spectrum::{
    derived_exponents, legendre_envelope, legendre_reconstruct, legendre_tolerance, mixed_pair_check, summarize,
    Branch, SingularitySpectrum,
};
use mfdxa::{fit_scaling, fluctuation_surface, profile_of, Panel, QGrid, ScaleGrid, ScalingFit, Series};

const T16: usize = 1 << 16;
const SEEDS: std::ops::Range<u64> = 0..10;

struct Outcome {
    pass: bool,
    detail: String,
}

/// Spectra gathered from every dataset, for the Legendre check.
type Spectra = Vec<(String, SingularitySpectrum)>;

fn mfdfa_on(values: Vec<f64>, scales: &ScaleGrid) -> ScalingFit {
    let p = profile_of(&Series::new("x", values).unwrap()).unwrap();
    let surface = fluctuation_surface(&p, &p, scales, &QGrid::default(), 1).unwrap();
    fit_scaling(&surface, None).unwrap()
}

fn mfdfa(values: Vec<f64>) -> ScalingFit {
    let scales = ScaleGrid::default_for(values.len(), 1).unwrap();
    mfdfa_on(values, &scales)
}

fn keep(spectra: &mut Spectra, name: String, fit: &ScalingFit) {
    spectra.push((name, summarize(fit).unwrap().spectrum));
}

fn fgn_oracle(spectra: &mut Spectra) -> Outcome {
    let start = Instant::now();
    let mut maes = Vec::new();
    for h in [0.3, 0.5, 0.7] {
        let mut err = 0.0;
        for seed in SEEDS {
            let fit = mfdfa(fbm(h, T16, seed).unwrap());
            err += (fit.h(2.0).unwrap() - (h + 1.0)).abs();
            keep(spectra, format!("fbm({h}) seed {seed}"), &fit);
        }
        maes.push((h, err / SEEDS.count() as f64));
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: maes.iter().all(|(_, m)| *m <= 0.03) && elapsed < Duration::from_secs(30),
        detail: format!(
            "MAE {} (tol 0.03); {:.1} s (limit 30 s)",
            maes.iter()
                .map(|(h, m)| format!("H={h}: {m:.4}"))
                .collect::<Vec<_>>()
                .join(", "),
            elapsed.as_secs_f64()
        ),
    }
}

fn fbm_branch(spectra: &mut Spectra) -> Outcome {
    let mut pass = true;
    let (mut worst_h, mut worst_g) = (0.0f64, 0.0f64);
    for seed in SEEDS {
        let fit = mfdfa(fbm(0.5, T16, seed).unwrap());
        let d = derived_exponents(&fit).unwrap();
        worst_h = worst_h.max((d.hurst - 0.5).abs());
        worst_g = worst_g.max((d.gamma + 1.0).abs());
        pass &= d.branch == Branch::NonStationary && (d.hurst - 0.5).abs() <= 0.03 && (d.gamma + 1.0).abs() <= 0.06;
        keep(spectra, format!("fbm(0.5) branch seed {seed}"), &fit);
    }
    Outcome {
        pass,
        detail: format!("worst |H-0.5| {worst_h:.4} (tol 0.03), worst |gamma+1| {worst_g:.4} (tol 0.06)"),
    }
}

fn cascade_h(a: f64, q: f64) -> f64 {
    (1.0 - (a.powf(q) + (1.0 - a).powf(q)).log2()) / q
}

fn cascade_oracle(spectra: &mut Spectra) -> Outcome {
    let a: f64 = 0.75;
    let qs = [-5.0, -3.0, -1.0, 1.0, 2.0, 3.0, 5.0];
    let analytic_da = (a / (1.0 - a)).log2();
    let values = binomial_cascade(a, 16, false, 0).unwrap();
    // Dyadic scales, commensurate with the construction.
    let dyadic = ScaleGrid::explicit((4..=14).map(|k| 1usize << k).collect()).unwrap();
    let report = |fit: &ScalingFit| {
        let errs: Vec<f64> = qs.iter().map(|&q| fit.h(q).unwrap() - cascade_h(a, q)).collect();
        let da = summarize(fit).unwrap().delta_alpha();
        (errs, da)
    };
    let fit = mfdfa_on(values.clone(), &dyadic);
    let (errs, da) = report(&fit);
    keep(spectra, "cascade dyadic".into(), &fit);
    let pass = errs.iter().all(|e| e.abs() <= 0.05) && (da - analytic_da).abs() <= 0.15;

    let geo = mfdfa(values);
    let (geo_errs, geo_da) = report(&geo);
    keep(spectra, "cascade geometric".into(), &geo);
    let fmt = |e: &[f64]| e.iter().map(|v| format!("{v:+.3}")).collect::<Vec<_>>().join(" ");
    Outcome {
        pass,
        detail: format!(
            "dyadic scales: h(q)-analytic at q={qs:?}: [{}] (tol 0.05); delta_alpha {da:.3} vs {analytic_da:.3} (tol 0.15) \
             | info, default geometric scales: [{}], delta_alpha {geo_da:.3}",
            fmt(&errs),
            fmt(&geo_errs)
        ),
    }
}

fn flatness(spectra: &mut Spectra) -> Outcome {
    let (mut worst_dev, mut worst_da) = (0.0f64, 0.0f64);
    for seed in SEEDS {
        let fit = mfdfa(fgn(0.5, T16, seed).unwrap());
        let h2 = fit.h(2.0).unwrap();
        let dev = fit.records.iter().map(|r| (r.h - h2).abs()).fold(0.0, f64::max);
        worst_dev = worst_dev.max(dev);
        worst_da = worst_da.max(summarize(&fit).unwrap().delta_alpha());
        keep(spectra, format!("fgn(0.5) seed {seed}"), &fit);
    }
    Outcome {
        pass: worst_dev < 0.1 && worst_da < 0.15,
        detail: format!("worst max|h(q)-h(2)| {worst_dev:.4} (< 0.1), worst delta_alpha {worst_da:.4} (< 0.15)"),
    }
}

fn dcca_bounds() -> Outcome {
    let t = 1 << 14;
    let scales = ScaleGrid::default_for(t, 1).unwrap();
    let x = profile_of(&Series::new("x", fgn(0.5, t, 1000).unwrap()).unwrap()).unwrap();
    let own = dcca_coefficient(&x, &x, &scales, 1).unwrap();
    let neg = dcca_coefficient(&x, &x.negated(), &scales, 1).unwrap();
    let exact = own.per_scale.iter().all(|&v| v == 1.0) && neg.per_scale.iter().all(|&v| v == -1.0);

    let sigmas: Vec<f64> = (0..100u64)
        .map(|k| {
            let x = profile_of(&Series::new("x", fgn(0.5, t, 2 * k).unwrap()).unwrap()).unwrap();
            let y = profile_of(&Series::new("y", fgn(0.5, t, 2 * k + 1).unwrap()).unwrap()).unwrap();
            dcca_coefficient(&x, &y, &scales, 1).unwrap().mean.abs()
        })
        .collect();
    let mean = sigmas.iter().sum::<f64>() / sigmas.len() as f64;
    let max = sigmas.iter().copied().fold(0.0, f64::max);
    Outcome {
        pass: exact && mean < 0.05 && max < 0.15,
        detail: format!(
            "self/negated exact: {exact}; 100 pairs mean |sigma| {mean:.4} (< 0.05), max {max:.4} (< 0.15)"
        ),
    }
}

fn mixed_pair(spectra: &mut Spectra) -> Outcome {
    let t = T16;
    let c = binomial_cascade(0.75, 16, false, 0).unwrap();
    let (z1, z2) = correlated_pair(0.9, t, 77).unwrap();
    let x: Vec<f64> = c.iter().zip(&z1).map(|(c, z)| c.sqrt() * z).collect();
    let y: Vec<f64> = c.iter().zip(&z2).map(|(c, z)| c.sqrt() * z).collect();
    let scales = ScaleGrid::default_for(t, 1).unwrap();
    let qs = QGrid::default();
    let px = profile_of(&Series::new("x", x).unwrap()).unwrap();
    let py = profile_of(&Series::new("y", y).unwrap()).unwrap();
    let fit = |a, b| fit_scaling(&fluctuation_surface(a, b, &scales, &qs, 1).unwrap(), None).unwrap();
    let (fx, fy, fxy) = (fit(&px, &px), fit(&py, &py), fit(&px, &py));
    for (name, f) in [("mixed x", &fx), ("mixed y", &fy), ("mixed xy", &fxy)] {
        keep(spectra, name.into(), f);
    }
    let points = mixed_pair_check(&fx, &fy, &fxy).unwrap();
    let positive: Vec<_> = points.iter().filter(|p| p.q > 0.0).collect();
    let worst = positive.iter().map(|p| p.delta.abs() / p.sigma).fold(0.0, f64::max);
    let negative_sig = points.iter().filter(|p| p.q < 0.0 && p.significant).count();
    Outcome {
        pass: positive.iter().all(|p| p.delta.abs() < p.sigma),
        detail: format!(
            "q>0: worst |delta|/sigma {worst:.3} (< 1) over {} moments | info: {negative_sig} of q<0 moments exceed 1 sigma",
            positive.len()
        ),
    }
}

fn mi_oracle() -> Outcome {
    const BINS: usize = 8;
    let mut worst = 0.0f64;
    for rho in [0.3, 0.6, 0.9] {
        for seed in 0..20 {
            let (x, y) = correlated_pair(rho, 10_000, seed).unwrap();
            let lambda = gcc(mutual_information(&x, &y, BINS).unwrap()).unwrap();
            worst = worst.max((lambda - rho).abs());
        }
    }
    let null_trials = 1000u64;
    let rejections = (0..null_trials)
        .filter(|&k| {
            let (x, y) = correlated_pair(0.0, 1000, 10_000 + k).unwrap();
            independence_test(&x, &y, BINS, 199, 0.05, k).unwrap().reject
        })
        .count();
    let size = rejections as f64 / null_trials as f64;
    let power_trials = 100u64;
    let detected = (0..power_trials)
        .filter(|&k| {
            let (x, y) = correlated_pair(0.3, 5000, 20_000 + k).unwrap();
            independence_test(&x, &y, BINS, 199, 0.05, k).unwrap().reject
        })
        .count();
    let power = detected as f64 / power_trials as f64;
    Outcome {
        pass: worst <= 0.05 && (size - 0.05).abs() <= 0.02 && power > 0.95,
        detail: format!(
            "{BINS} bins: worst |lambda-rho| {worst:.4} (tol 0.05); H0 rate {size:.3} (0.05 +- 0.02, {null_trials} trials); \
             power {power:.2} (> 0.95, {power_trials} trials)"
        ),
    }
}

fn fit_exactness() -> Outcome {
    let scales: Vec<f64> = ScaleGrid::default_for(T16, 1)
        .unwrap()
        .scales()
        .iter()
        .map(|&s| s as f64)
        .collect();
    let opts = FitOptions::default();
    let (mut worst_h, mut worst_sigma, mut worst_ols) = (0.0f64, 0.0f64, 0.0f64);
    for h in [0.2, 0.8, 1.5] {
        let f: Vec<f64> = scales.iter().map(|s| 2.5 * s.powf(h)).collect();
        let relative: Vec<f64> = f.iter().map(|v| 1e-3 * v).collect();
        let fit = PowerLawProblem::new(&scales, &f, &relative).fit(2.0, &opts).unwrap();
        worst_h = worst_h.max((fit.h - h).abs());
        worst_sigma = worst_sigma.max(fit.sigma_minus).max(fit.sigma_plus);

        let equal = vec![1.0; scales.len()];
        let fit = PowerLawProblem::new(&scales, &f, &equal).fit(2.0, &opts).unwrap();
        worst_ols = worst_ols.max((fit.h - ols_log_slope(&scales, &f).0).abs());
    }
    Outcome {
        pass: worst_h < 1e-3 && worst_sigma < 1e-3 && worst_ols < 1e-9,
        detail: format!(
            "worst |h-h0| {worst_h:.2e} (< 1e-3), worst sigma {worst_sigma:.2e} (< 1e-3), equal-weight vs OLS {worst_ols:.2e} (< 1e-9)"
        ),
    }
}

fn legendre(spectra: &Spectra) -> Outcome {
    let mut pass = true;
    let (mut worst_ratio, mut worst_name) = (0.0f64, String::new());
    let mut envelope_over = 0;
    for (name, spec) in spectra {
        let tau: Vec<f64> = spec.points.iter().map(|p| p.tau).collect();
        let tol = legendre_tolerance(spec);
        let err = legendre_reconstruct(spec)
            .iter()
            .zip(&tau)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        pass &= err < tol;
        if err / tol > worst_ratio {
            worst_ratio = err / tol;
            worst_name = name.clone();
        }
        let gap = legendre_envelope(spec)
            .iter()
            .zip(&tau)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if gap >= tol {
            envelope_over += 1;
        }
    }
    Outcome {
        pass,
        detail: format!(
            "{} datasets; worst error/tolerance {worst_ratio:.2e} ({worst_name}) | info: discrete envelope exceeds \
             tolerance on {envelope_over} datasets (non-concave noise)",
            spectra.len()
        ),
    }
}

fn run_once(input: &Path, out: &Path) -> (Duration, usize, usize) {
    let start = Instant::now();
    let config = RunConfig {
        input: input.to_path_buf(),
        ..RunConfig::default()
    };
    let panel = load_configured_panel(&config).unwrap();
    let results = analyze_panel(&panel, &config).unwrap();
    write_outputs(&results, out).unwrap();
    (start.elapsed(), results.pairs.len(), results.failures.len())
}

fn same_tree(a: &Path, b: &Path) -> bool {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let count_b = fs::read_dir(b).unwrap().count();
    names.len() == count_b
        && names
            .iter()
            .all(|n| fs::read(a.join(n)).unwrap() == fs::read(b.join(n)).unwrap())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let series = (0..48)
        .map(|k| {
            let h = 0.3 + 0.5 * k as f64 / 47.0;
            Series::new(format!("S{k:02}"), fgn(h, 4995, 500 + k as u64).unwrap()).unwrap()
        })
        .collect();
    let input = dir.path().join("panel.csv");
    Panel::with_synthetic_calendar(series)
        .unwrap()
        .write_csv(&input)
        .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let (ta, pairs, failures) = run_once(&input, &a);
    let (tb, _, _) = run_once(&input, &b);
    let identical = same_tree(&a, &b);
    let slowest = ta.max(tb);
    Outcome {
        pass: pairs == 1128 && failures == 0 && identical && slowest < Duration::from_secs(300),
        detail: format!(
            "{pairs} pairs, {failures} failures; outputs byte-identical: {identical}; runs {:.1} s / {:.1} s (limit 300 s)",
            ta.as_secs_f64(),
            tb.as_secs_f64()
        ),
    }
}

fn main() -> ExitCode {
    let mut spectra = Spectra::new();
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    let mut record = |id, name, outcome: Outcome| {
        println!(
            "criterion {id:>2} {:<4} {name}: {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
        results.push((id, name, outcome));
    };
    record(1, "fGn oracle", fgn_oracle(&mut spectra));
    record(2, "fBm branch", fbm_branch(&mut spectra));
    record(3, "cascade oracle", cascade_oracle(&mut spectra));
    record(4, "monofractal flatness", flatness(&mut spectra));
    record(5, "DCCA bounds", dcca_bounds());
    record(6, "mixed-pair relation", mixed_pair(&mut spectra));
    record(7, "MI/GCC oracle", mi_oracle());
    record(8, "fit exactness", fit_exactness());
    record(9, "Legendre consistency", legendre(&spectra));
    record(10, "determinism and throughput", determinism());

    let failed: Vec<u8> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
