use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mfdxa::generators::fgn;
use mfdxa::output::read_matrix;
use mfdxa::{Panel, Series};

fn mfdxa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfdxa")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

/// Three fGn series of 2048 points; optionally a fourth constant column.
fn write_panel(dir: &Path, with_constant: bool) -> PathBuf {
    let mut series: Vec<Series> = (0..3)
        .map(|k| Series::new(format!("s{k}"), fgn(0.4 + 0.1 * k as f64, 2048, k).unwrap()).unwrap())
        .collect();
    if with_constant {
        series.push(Series::new("flat", vec![1.0; 2048]).unwrap());
    }
    let path = dir.join("panel.csv");
    Panel::with_synthetic_calendar(series)
        .unwrap()
        .write_csv(&path)
        .unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn analyze_writes_every_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_panel(dir.path(), false);
    let out = dir.path().join("out");
    let res = mfdxa(&["analyze", "--input", s(&input), "--out", s(&out), "--surrogates", "99"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    for f in [
        "summary.csv",
        "bars.csv",
        "fs_curves.csv",
        "hq.csv",
        "spectrum.csv",
        "multifractal_summary.csv",
        "mixed_pair.csv",
        "dcca.csv",
        "mi.csv",
        "gcc_groups.csv",
        "failures.csv",
        "run_metadata.json",
        "matrix_H.csv",
        "matrix_sigma_dcca.csv",
        "matrix_gcc.csv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert_eq!(
        header(&out.join("fs_curves.csv")),
        "id_x,id_y,q,s,F,sigma_obs,mode,order"
    );
    assert_eq!(header(&out.join("spectrum.csv")), "id_x,id_y,q,h,tau,alpha,f_alpha");
    assert_eq!(header(&out.join("failures.csv")), "stage,id_x,id_y,error");
    assert!(!out.join("dcca_scales.csv").exists());

    let m = read_matrix(&out.join("matrix_sigma_dcca.csv")).unwrap();
    assert_eq!(m.ids, ["s0", "s1", "s2"]);
    for i in 0..3 {
        assert_eq!(m.values[i][i], 1.0);
        for j in 0..3 {
            assert_eq!(m.values[i][j].to_bits(), m.values[j][i].to_bits());
        }
    }
}

#[test]
fn failing_series_gives_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_panel(dir.path(), true);
    let out = dir.path().join("out");
    let res = mfdxa(&["analyze", "--input", s(&input), "--out", s(&out), "--surrogates", "99"]);
    assert_eq!(code(&res), 1, "{}", String::from_utf8_lossy(&res.stderr));
    let failures = fs::read_to_string(out.join("failures.csv")).unwrap();
    assert!(failures.lines().skip(1).all(|l| l.contains("flat")), "{failures}");
    assert!(failures.lines().count() > 1);
    // The healthy series are still reported.
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.contains("s2"));
}

#[test]
fn usage_and_input_errors_give_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("absent.csv");
    assert_eq!(code(&mfdxa(&["analyze", "--input", s(&missing), "--out", s(&out)])), 2);
    let input = write_panel(dir.path(), false);
    assert_eq!(
        code(&mfdxa(&[
            "analyze",
            "--input",
            s(&input),
            "--out",
            s(&out),
            "--order",
            "x"
        ])),
        2
    );
    assert_eq!(
        code(&mfdxa(&[
            "analyze",
            "--input",
            s(&input),
            "--out",
            s(&out),
            "--pairs",
            "s0:zz"
        ])),
        2
    );
    assert_eq!(code(&mfdxa(&["analyze", "--input", s(&input)])), 2);
}

#[test]
fn empty_pair_filter_skips_pair_reports() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_panel(dir.path(), false);
    let out = dir.path().join("out");
    let res = mfdxa(&["analyze", "--input", s(&input), "--out", s(&out), "--pairs", "none"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join("summary.csv").is_file());
    for f in ["dcca.csv", "mi.csv", "mixed_pair.csv", "matrix_gcc.csv"] {
        assert!(!out.join(f).exists(), "{f} written without pairs");
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_panel(dir.path(), false);
    let out = dir.path().join("out");
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        format!(
            "input = {:?}\npairs = \"none\"\nseed = 5\nq-grid = \"-2,0,2\"\n",
            s(&input)
        ),
    )
    .unwrap();
    let res = mfdxa(&[
        "analyze",
        "--config",
        s(&config),
        "--out",
        s(&out),
        "--pairs",
        "s0:s1",
        "--surrogates",
        "99",
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let mi = fs::read_to_string(out.join("mi.csv")).unwrap();
    assert_eq!(mi.lines().count(), 2, "{mi}");
    let meta = fs::read_to_string(out.join("run_metadata.json")).unwrap();
    assert!(meta.contains("\"seed\": 5"), "{meta}");
    let hq = fs::read_to_string(out.join("hq.csv")).unwrap();
    // Three series plus the selected pair, three moments each.
    assert_eq!(hq.lines().count(), 1 + 4 * 3, "{hq}");

    fs::write(&config, "unknown_key = 1\n").unwrap();
    let res = mfdxa(&[
        "analyze",
        "--config",
        s(&config),
        "--input",
        s(&input),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 2);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_panel(dir.path(), false);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, threads) in [(&a, "1"), (&b, "2")] {
        let res = mfdxa(&[
            "analyze",
            "--input",
            s(&input),
            "--out",
            s(out),
            "--surrogates",
            "99",
            "--threads",
            threads,
        ]);
        assert_eq!(code(&res), 0);
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 10);
    for n in names {
        assert_eq!(
            fs::read(a.join(&n)).unwrap(),
            fs::read(b.join(&n)).unwrap(),
            "{n:?} differs"
        );
    }
}

#[test]
fn mi_subcommand_and_report_agree() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_panel(dir.path(), false);
    let out = dir.path().join("out");
    let res = mfdxa(&["mi", "--input", s(&input), "--out", s(&out), "--surrogates", "99"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join("mi.csv").is_file());
    assert!(!out.join("dcca.csv").exists());

    let rep = dir.path().join("rep");
    let res = mfdxa(&["report", "--input", s(&out.join("mi.csv")), "--out", s(&rep)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(
        fs::read(out.join("gcc_groups.csv")).unwrap(),
        fs::read(rep.join("gcc_groups.csv")).unwrap()
    );
}

#[test]
fn generate_writes_a_loadable_panel() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gen.csv");
    let res = mfdxa(&[
        "generate",
        "--kind",
        "fgn",
        "--hurst",
        "0.3,0.7",
        "--count",
        "2",
        "--length",
        "1024",
        "--out",
        s(&path),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1025);
    assert_eq!(lines[0].split(',').count(), 5);

    let pair = dir.path().join("pair.csv");
    assert_eq!(
        code(&mfdxa(&[
            "generate",
            "--kind",
            "pair",
            "--length",
            "512",
            "--out",
            s(&pair)
        ])),
        0
    );
    assert_eq!(
        fs::read_to_string(&pair)
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .split(',')
            .count(),
        3
    );

    assert_eq!(code(&mfdxa(&["generate", "--kind", "nope", "--out", s(&path)])), 2);
    assert_eq!(
        code(&mfdxa(&[
            "generate",
            "--kind",
            "fgn",
            "--length",
            "1000",
            "--out",
            s(&path)
        ])),
        2
    );
}
