use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mcbf::harness::{power_means_from_csv, CSV_HEADER};

fn mcbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcbf")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SMALL: &str = "cells = 2\nues_per_cell = 2\nantennas = 8\ndrops = 3\nmethods = centralized, alg1, zf\n";

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("net.cfg");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn unknown_key_is_a_config_error_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cells = 2\n\nfoo = 1\n");
    let o = mcbf(&["run", "--config", &cfg]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn zero_drops_and_bad_usage_exit_with_one() {
    assert_eq!(code(&mcbf(&["run", "--drops", "0"])), 1);
    assert_eq!(code(&mcbf(&["frobnicate"])), 1);
    assert_eq!(code(&mcbf(&["run", "--methods", "alg9"])), 1);
    assert_eq!(code(&mcbf(&["--help"])), 0);
}

#[test]
fn run_writes_deterministic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = mcbf(&["run", "--config", &cfg, "--seed", "5", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv_a = fs::read(a.join("records.csv")).unwrap();
    assert_eq!(csv_a, fs::read(b.join("records.csv")).unwrap());
    let text = String::from_utf8(csv_a.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(text.lines().count(), 1 + 3 * 3);
    assert!(a.join("summary.txt").exists());

    let cdf = fs::read_to_string(a.join("cdf_centralized.txt")).unwrap();
    let pts: Vec<(f64, f64)> = cdf
        .lines()
        .map(|l| {
            let mut it = l.split_whitespace().map(|x| x.parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    assert!(pts.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));

    // summary means recompute exactly from the CSV
    let means = power_means_from_csv(&csv_a[..]).unwrap();
    let summary = fs::read_to_string(a.join("summary.txt")).unwrap();
    for (method, mean) in means {
        let line = summary.lines().find(|l| l.starts_with(&format!("{method},"))).unwrap();
        let field: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!(field == mean || (field.is_nan() && mean.is_nan()), "{method}: {field} vs {mean}");
    }
}

#[test]
fn backhaul_prints_the_counting_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cells = 3\nues_per_cell = 2\nantennas = 10\n");
    let o = mcbf(&["backhaul", "--config", &cfg]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("alg1,1200,0"));
    assert!(out.contains("alg2,12,0"));
    assert!(out.contains("centralized,0,240"));
}

#[test]
fn sweep_writes_power_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cells = 2\ndrops = 2\nmethods = centralized,alg1\nsweep_ues = 1,2\n");
    let out = dir.path().join("s");
    let o = mcbf(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("power_vs_k.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 2);
    assert!(table.lines().nth(1).unwrap().starts_with("1,4,centralized,"));
    assert!(out.join("records_k2.csv").exists());
}

#[test]
fn validate_exit_code_matches_report() {
    let o = mcbf(&["validate", "--quick"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().count(), 6, "{text}");
    let failed = text.lines().any(|l| l.starts_with("FAIL"));
    assert_eq!(code(&o), if failed { 2 } else { 0 });
}
