//! The `wealthdyn` binary end to end: outputs, determinism and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wealthdyn"))
        .args(args)
        .output()
        .unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary_status(report: &str) -> &str {
    let summary = &report[report.find("[summary]").expect("summary section")..];
    summary
        .lines()
        .find_map(|l| l.strip_prefix("status: "))
        .expect("status entry")
}

const SMALL: &str = "seed = 3\nagents = 400\nsteps = 40\n\n[kernel]\nfamily = \"lognormal\"\nalpha = 1.02\nbeta = 0.0\ngamma = 0.2\n";

#[test]
fn gini_of_final_population_matches_trajectory() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.toml", SMALL);
    let traj = dir.path().join("t.csv");
    let pop = dir.path().join("p.txt");
    let o = bin(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        traj.to_str().unwrap(),
        "--final-population",
        pop.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&traj).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let last: Vec<&str> = csv.lines().last().unwrap().split(',').collect();
    assert_eq!(csv.lines().count(), 42);
    let col = |name: &str| {
        last[header.iter().position(|h| *h == name).unwrap()]
            .parse::<f64>()
            .unwrap()
    };

    let o = bin(&["gini", "--input", pop.to_str().unwrap()]);
    assert!(o.status.success());
    let out = String::from_utf8(o.stdout).unwrap();
    let value = |key: &str| {
        out.lines()
            .find_map(|l| l.strip_prefix(key))
            .unwrap()
            .trim()
            .parse::<f64>()
            .unwrap()
    };
    assert!((value("gini:") - col("gini")).abs() < 1e-12);
    assert!((value("cv:") - col("cv")).abs() < 1e-11 * col("cv"));
}

#[test]
fn gini_examples() {
    let dir = TempDir::new().unwrap();
    for (values, expected) in [
        ("1\n2\n3\n4\n", "0.250000000000"),
        ("5\n5\n", "0"),
        ("0\n0\n0\n1\n", "0.750000000000"),
    ] {
        let p = write(&dir, "w.txt", values);
        let o = bin(&["gini", "--input", &p]);
        assert!(o.status.success());
        let out = String::from_utf8(o.stdout).unwrap();
        assert_eq!(out.lines().next().unwrap(), format!("gini: {expected}"));
    }
}

#[test]
fn gini_rejects_non_numeric_line() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "w.txt", "1\n2\nabc\n");
    let o = bin(&["gini", "--input", &p]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn same_seed_same_bytes() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.toml", SMALL);
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["simulate", "--config", &cfg, "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert!(bin(&args).status.success());
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv", &[]);
    assert_eq!(a, run("b.csv", &["--threads", "3"]));
    assert_ne!(a, run("c.csv", &["--seed", "4"]));
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let low_alpha = write(
        &dir,
        "a.toml",
        &SMALL.replace("alpha = 1.02", "alpha = 0.9"),
    );
    let o = bin(&["simulate", "--config", &low_alpha]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kernel.alpha"), "{}", stderr(&o));

    let unknown = write(&dir, "u.toml", &format!("{SMALL}colour = \"red\"\n"));
    let o = bin(&["simulate", "--config", &unknown]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));
}

#[test]
fn verify_bounds_on_frozen_dynamics() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("r.txt");
    let o = bin(&[
        "verify-bounds",
        "--config",
        configs().join("deterministic.toml").to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(report).unwrap();
    assert_eq!(summary_status(&text), "satisfied", "{text}");
}

#[test]
fn verify_appendix_needs_a_density() {
    let o = bin(&[
        "verify-appendix",
        "--config",
        configs().join("deterministic.toml").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("hypotheses not met"), "{}", stderr(&o));
}

#[test]
fn verify_appendix_report_sections() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("r.txt");
    let o = bin(&[
        "verify-appendix",
        "--config",
        configs().join("quick.toml").to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(report).unwrap();
    for s in [
        "[settings]",
        "[diagonal]",
        "[functional]",
        "[minimality]",
        "[main_inequality]",
        "[summary]",
    ] {
        assert!(text.contains(s), "missing {s}");
    }
    assert_eq!(o.status.success(), summary_status(&text) == "satisfied");
}

#[test]
fn search_without_sign_change_fails() {
    let dir = TempDir::new().unwrap();
    let text = SMALL.replace("steps = 40", "steps = 100")
        + "\n[search]\nc_lo = 0.3\nc_hi = 0.5\ntol = 0.01\n";
    let cfg = write(&dir, "s.toml", &text);
    let o = bin(&["search-threshold", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no sign change"), "{}", stderr(&o));
}

#[test]
fn scenario_summary() {
    let o = bin(&["scenarios", "--agents", "500", "--steps", "100"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "scenario,c_or_beta,final_gini,final_cv,verdict");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("saturation,beta=0,"));
}
