//! File formats: trajectory and summary CSVs, population dumps, and the
//! sectioned `key: value` report.
//!
//! CSV floats are written with 17 significant digits so they read back
//! exactly; missing or not-computed values are empty cells.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::appendix::{DiagonalReport, MainInequalityReport, MinimalityReport, PropagationReport};
use crate::experiments::{ScenarioResult, ThresholdReport};
use crate::trajectory::{CheckTally, TrajectoryRow};

/// Round-trip representation of a float, empty for NaN.
pub fn csv_float(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.16e}")
    }
}

/// Twelve significant digits for people to read.
pub fn human(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if (-4..12).contains(&mag) {
        format!("{:.*}", (11 - mag) as usize, v)
    } else {
        format!("{v:.11e}")
    }
}

pub fn tail_column(kappa: f64) -> String {
    format!("tail_p_{kappa}")
}

/// Streams the per-step trajectory CSV.
pub struct TrajectoryWriter<W: Write> {
    out: W,
    kappas: Vec<f64>,
    records: Vec<String>,
}

impl<W: Write> TrajectoryWriter<W> {
    /// Write the header. `kappas` are the tail columns, `records` the
    /// inequality names in column order.
    pub fn new(mut out: W, kappas: &[f64], records: &[String]) -> io::Result<Self> {
        let mut cols: Vec<String> = ["t", "mu", "sigma", "cv", "gini"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        cols.extend(kappas.iter().map(|&k| tail_column(k)));
        for r in records {
            for suffix in ["lhs", "rhs", "satisfied", "tol"] {
                cols.push(format!("{r}_{suffix}"));
            }
        }
        writeln!(out, "{}", cols.join(","))?;
        Ok(Self {
            out,
            kappas: kappas.to_vec(),
            records: records.to_vec(),
        })
    }

    pub fn write_row(&mut self, row: &TrajectoryRow<'_>) -> io::Result<()> {
        let m = row.metrics;
        let mut cells = vec![
            m.t.to_string(),
            csv_float(m.mu),
            csv_float(m.sigma),
            csv_float(m.cv),
            csv_float(m.gini),
        ];
        cells.extend(
            self.kappas
                .iter()
                .map(|&k| m.tail(k).map(csv_float).unwrap_or_default()),
        );
        for name in &self.records {
            match row.report.and_then(|r| r.get(name)) {
                Some(rec) => cells.extend([
                    csv_float(rec.lhs),
                    csv_float(rec.rhs),
                    (rec.satisfied() as u8).to_string(),
                    csv_float(rec.tolerance),
                ]),
                None => cells.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        writeln!(self.out, "{}", cells.join(","))
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// One wealth value per line.
pub fn write_population<W: Write>(mut out: W, wealth: &[f64]) -> io::Result<()> {
    for &w in wealth {
        writeln!(out, "{w:.16e}")?;
    }
    out.flush()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct PopulationParseError {
    pub line: usize,
    pub message: String,
}

/// Parse one value per line; blank lines are skipped.
pub fn read_population(text: &str) -> Result<Vec<f64>, PopulationParseError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        let v: f64 = s.parse().map_err(|_| PopulationParseError {
            line: i + 1,
            message: format!("not a number: {s:?}"),
        })?;
        out.push(v);
    }
    Ok(out)
}

pub fn write_summary<W: Write>(mut out: W, results: &[ScenarioResult]) -> io::Result<()> {
    writeln!(out, "scenario,c_or_beta,final_gini,final_cv,verdict")?;
    for r in results {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.name,
            r.parameter,
            csv_float(r.final_metrics.gini),
            csv_float(r.final_metrics.cv),
            r.verdict
        )?;
    }
    out.flush()
}

/// A report made of named sections of `key: value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub sections: Vec<Section>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub entries: Vec<(String, String)>,
}

impl Section {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            entries: Vec::new(),
        }
    }

    pub fn entry(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn num(self, key: impl Into<String>, v: f64) -> Self {
        self.entry(key, human(v))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

impl Report {
    pub fn push(&mut self, s: Section) {
        self.sections.push(s);
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "[{}]", s.name);
            for (k, v) in &s.entries {
                let _ = writeln!(out, "{k}: {v}");
            }
        }
        out
    }

    /// Inverse of [`Report::render`].
    pub fn parse(text: &str) -> Option<Report> {
        let mut r = Report::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                r.push(Section::new(name));
            } else {
                let (k, v) = line.split_once(": ")?;
                r.sections.last_mut()?.entries.push((k.into(), v.into()));
            }
        }
        Some(r)
    }
}

fn status(ok: bool) -> &'static str {
    if ok {
        "satisfied"
    } else {
        "violated"
    }
}

pub fn tally_section(t: &CheckTally) -> Section {
    let mut s = Section::new(format!("check.{}", t.name))
        .entry("kind", format!("{:?}", t.kind).to_lowercase())
        .entry("evaluated", t.evaluated)
        .entry("satisfied", t.satisfied)
        .entry("tolerated", t.tolerated)
        .entry("failed", t.failed)
        .num("satisfied_fraction", t.satisfied_fraction())
        .entry("true_to_false", t.true_to_false);
    if let Some(f) = t.first_failure {
        s = s.entry("first_failure", f);
    }
    if let Some(l) = t.last_satisfied_at {
        s = s.entry("last_satisfied_at", l);
    }
    s
}

pub fn diagonal_section(name: &str, r: &DiagonalReport) -> Section {
    let mut s = Section::new(name)
        .entry("status", status(r.satisfied()))
        .num("gamma", r.gamma)
        .num("tolerance", r.tolerance);
    for row in &r.rows {
        let x = human(row.x);
        s = s
            .num(format!("f_xx@{x}"), row.f_xx)
            .num(format!("quad_err@{x}"), row.abs_err)
            .num(format!("slack_mean@{x}"), row.slack_mean)
            .num(format!("slack_x@{x}"), row.slack_x);
    }
    s
}

pub fn minimality_section(name: &str, r: &MinimalityReport) -> Section {
    let worst = r
        .trials
        .iter()
        .map(|t| t.ratio)
        .fold(f64::INFINITY, f64::min);
    let failures = r.trials.iter().filter(|t| !t.minimal_ok).count();
    let window_failures: usize = r.trials.iter().map(|t| t.window_failures).sum();
    let mut s = Section::new(name)
        .entry("status", status(r.satisfied()))
        .num("a", r.a)
        .num("delta", r.delta)
        .num("constant_c", r.constant)
        .num("extremal_closed_form", r.extremal_closed)
        .num("extremal_with_cutoff", r.extremal_respected)
        .num("derivative_ceiling", r.derivative_ceiling)
        .entry("trials", r.trials.len())
        .entry("excluded", r.excluded)
        .entry("minimality_failures", failures)
        .entry("window_failures", window_failures);
    if worst.is_finite() {
        s = s.num("worst_ratio", worst);
    }
    for t in r.trials.iter().filter(|t| !t.label.starts_with("random_")) {
        s = s.num(format!("ratio.{}", t.label), t.ratio);
    }
    s
}

pub fn main_inequality_section(name: &str, r: &MainInequalityReport) -> Section {
    Section::new(name)
        .entry("status", status(r.satisfied()))
        .num("mu", r.mu)
        .num("tail_prob", r.tail_prob)
        .entry("pairs", r.pairs)
        .entry("excluded", r.excluded)
        .num("mean_f", r.mean_f)
        .num("std_err", r.std_err)
        .num("rhs", r.rhs)
        .num("margin", r.margin())
        .num("margin_std_errs", r.margin_in_std_errs())
        .num("stripe_probability", r.stripe.probability)
        .num("stripe_quadrant", r.stripe.quadrant)
        .num("stripe_rescaled_moment", r.stripe.rescaled_moment)
        .num("stripe_target", r.stripe.target)
}

pub fn propagation_section(name: &str, r: &PropagationReport) -> Section {
    Section::new(name)
        .entry("status", status(r.satisfied()))
        .num("bound", r.bound)
        .entry("points", r.points.len())
        .num("mass_within", r.mass_within)
        .num("refined_mass_within", r.refined_mass_within)
        .num("grid_mass", r.grid_mass)
        .num("required_mass", r.required_mass)
}

pub fn threshold_section(name: &str, r: &ThresholdReport) -> Section {
    let probes: Vec<String> = r
        .search
        .probes
        .iter()
        .map(|(c, v)| format!("{}={v}", human(*c)))
        .collect();
    Section::new(name)
        .num("threshold", r.search.threshold)
        .num("bracket_lo", r.search.lo)
        .num("bracket_hi", r.search.hi)
        .num("plateau_cv", r.plateau_cv)
        .num("scale", r.scale)
        .num("ratio", r.ratio())
        .entry("probes", probes.join(" "))
}
