//! Command-line front end. Exit status 0 means success (and every checked
//! inequality held), 1 a runtime or verification failure, 2 a usage,
//! configuration or input error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::appendix::{self, Cutoff, DensityOnRay};
use crate::bounds::BoundParams;
use crate::config::{parse_config, RunConfig};
use crate::dynamics::{self, DynamicsError, PolicyMode, PopulationState, StepView};
use crate::experiments::{self, ExperimentError};
use crate::metrics;
use crate::output::{self, human, Report, Section, TrajectoryWriter};
use crate::trajectory::{self, BoundSettings, GammaSource, RunOutcome};

#[derive(Debug, Parser)]
#[command(
    name = "wealthdyn",
    version,
    about = "Wealth concentration under stochastic growth with salaries"
)]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Primary output file (stdout when absent and none is configured).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the dynamics and write the per-step trajectory CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also dump the final population, one value per line.
        #[arg(long)]
        final_population: Option<PathBuf>,
    },
    /// Print the Gini coefficient and CV of a population file.
    Gini {
        #[arg(long)]
        input: PathBuf,
    },
    /// Run the dynamics and check the growth and halting inequalities.
    VerifyBounds {
        #[command(flatten)]
        common: Common,
    },
    /// Check the pair-splitting bounds on the configured kernel.
    VerifyAppendix {
        #[command(flatten)]
        common: Common,
    },
    /// Bisect for the smallest stabilizing proportional salary.
    SearchThreshold {
        #[command(flatten)]
        common: Common,
    },
    /// Run the shipped scenarios and write the summary CSV.
    Scenarios {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        agents: usize,
        #[arg(long, default_value_t = 1500)]
        steps: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

/// A failure with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn usage(message: impl ToString) -> Failure {
    Failure {
        code: 2,
        message: message.to_string(),
    }
}

fn runtime(message: impl ToString) -> Failure {
    Failure {
        code: 1,
        message: message.to_string(),
    }
}

type CliResult = Result<(), Failure>;

/// Parse `args` (program name first), run, and return the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Simulate {
            common,
            final_population,
        } => simulate(&common, final_population),
        Command::Gini { input } => gini(&input),
        Command::VerifyBounds { common } => verify_bounds(&common),
        Command::VerifyAppendix { common } => verify_appendix(&common),
        Command::SearchThreshold { common } => search_threshold(&common),
        Command::Scenarios {
            out,
            agents,
            steps,
            seed,
        } => scenarios(out.as_deref(), agents, steps, seed),
    }
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let cfg = parse_config(&common.config).map_err(usage)?;
    Ok(match common.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => {
            Box::new(BufWriter::new(File::create(p).map_err(|e| {
                runtime(format!("cannot create {}: {e}", p.display()))
            })?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn io_fail(e: io::Error) -> Failure {
    runtime(format!("write failed: {e}"))
}

fn settings(cfg: &RunConfig) -> Result<Option<BoundSettings>, Failure> {
    cfg.bound_settings().map_err(runtime)
}

/// Run with optional bound checks, streaming rows to `traj` when given.
fn run_with_output(
    cfg: &RunConfig,
    settings: Option<&BoundSettings>,
    traj: Option<Box<dyn Write>>,
) -> Result<RunOutcome, Failure> {
    let mut kappas = cfg.run.kappas.clone();
    if let Some(s) = settings {
        for k in s.required_kappas() {
            if !kappas.contains(&k) {
                kappas.push(k);
            }
        }
    }
    let records = settings
        .map(|s| s.record_names(cfg.run.policy.mode()))
        .unwrap_or_default();
    let mut writer = match traj {
        Some(w) => Some(TrajectoryWriter::new(w, &kappas, &records).map_err(io_fail)?),
        None => None,
    };
    let result = trajectory::simulate::<RowError, _>(&cfg.run, settings, |row| {
        if let Some(w) = writer.as_mut() {
            w.write_row(row).map_err(RowError::Io)?;
        }
        Ok(())
    });
    if let Some(w) = writer.as_mut() {
        w.flush().map_err(io_fail)?;
    }
    result.map_err(|e| match e {
        RowError::Io(e) => io_fail(e),
        RowError::Dynamics(e) => runtime(format!("simulation failed: {e}")),
    })
}

enum RowError {
    Io(io::Error),
    Dynamics(DynamicsError),
}

impl From<DynamicsError> for RowError {
    fn from(e: DynamicsError) -> Self {
        RowError::Dynamics(e)
    }
}

fn simulate(common: &Common, final_population: Option<PathBuf>) -> CliResult {
    let cfg = load(common)?;
    let s = settings(&cfg)?;
    let path = common.out.clone().or(cfg.output.trajectory.clone());
    let outcome = run_with_output(&cfg, s.as_ref(), Some(open_out(path.as_deref())?))?;
    if let Some(p) = final_population.or(cfg.output.final_population.clone()) {
        let f =
            File::create(&p).map_err(|e| runtime(format!("cannot create {}: {e}", p.display())))?;
        output::write_population(BufWriter::new(f), outcome.final_state.wealth())
            .map_err(io_fail)?;
    }
    Ok(())
}

fn gini(input: &Path) -> CliResult {
    let text = std::fs::read_to_string(input)
        .map_err(|e| usage(format!("cannot read {}: {e}", input.display())))?;
    let w =
        output::read_population(&text).map_err(|e| usage(format!("{}: {e}", input.display())))?;
    let g = metrics::gini(&w).map_err(usage)?;
    let cv = metrics::coefficient_of_variation(&w).map_err(usage)?;
    println!("gini: {}", human(g));
    println!("cv: {}", human(cv));
    Ok(())
}

fn settings_section(s: &BoundSettings) -> Section {
    let source = match s.gamma_source {
        GammaSource::Explicit => "explicit".to_string(),
        GammaSource::Dispersion => "dispersion".to_string(),
        GammaSource::Calibrated { mass } => format!("calibrated@{mass}"),
        GammaSource::NoDensity => "no_density".to_string(),
    };
    Section::new("settings")
        .num("kappa", s.params.kappa)
        .num("delta", s.params.delta_stripe)
        .num("log_derivative_gamma", s.params.gamma_logderiv)
        .entry("gamma_source", source)
        .num("epsilon", s.params.epsilon)
        .num("gamma_disp", s.gamma_disp)
        .num("mass_leak", s.mass_leak)
        .entry("bootstrap_resamples", s.bootstrap_resamples)
        .num("tolerance_sigmas", s.tolerance_sigmas)
}

fn verify_bounds(common: &Common) -> CliResult {
    let mut cfg = load(common)?;
    cfg.bounds.enabled = true;
    let s = settings(&cfg)?.expect("bounds enabled");
    let traj = match &cfg.output.trajectory {
        Some(p) => Some(open_out(Some(p))?),
        None => None,
    };
    let outcome = run_with_output(&cfg, Some(&s), traj)?;
    let mut report = Report::default();
    report.push(settings_section(&s));
    for t in &outcome.tallies {
        report.push(output::tally_section(t));
    }
    let failed: Vec<String> = outcome
        .failed_checks()
        .iter()
        .map(|t| t.name.clone())
        .collect();
    report.push(
        Section::new("summary")
            .num("final_gini", outcome.final_metrics.gini)
            .num("final_cv", outcome.final_metrics.cv)
            .entry(
                "status",
                if failed.is_empty() {
                    "satisfied"
                } else {
                    "violated"
                },
            )
            .entry("failed_checks", failed.join(" ")),
    );
    write_report(
        &report,
        common.out.as_deref().or(cfg.output.report.as_deref()),
    )?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(runtime(format!(
            "inequalities violated beyond tolerance: {}",
            failed.join(", ")
        )))
    }
}

fn write_report(report: &Report, path: Option<&Path>) -> CliResult {
    let mut out = open_out(path)?;
    out.write_all(report.render().as_bytes()).map_err(io_fail)?;
    out.flush().map_err(io_fail)
}

/// Population just before the last step, and the final one.
fn last_two_states(cfg: &RunConfig) -> Result<(PopulationState, PopulationState), Failure> {
    let mut prev = None;
    let last_step = cfg.run.steps.saturating_sub(1);
    let last = dynamics::run::<DynamicsError, _>(&cfg.run, |v: &StepView<'_>| {
        if v.state.t() == last_step {
            prev = Some(v.state.clone());
        }
        Ok(())
    })
    .map_err(|e| runtime(format!("simulation failed: {e}")))?;
    Ok((prev.expect("snapshot at steps - 1"), last))
}

fn verify_appendix(common: &Common) -> CliResult {
    let cfg = load(common)?;
    if !cfg.run.kernel.has_density() {
        return Err(runtime(appendix::AppendixError::NoDensity));
    }
    if cfg.run.policy.mode() == PolicyMode::General {
        return Err(usage(
            "verify-appendix needs a linear or proportional policy",
        ));
    }
    let mut s_cfg = cfg.clone();
    s_cfg.bounds.enabled = true;
    let s = settings(&s_cfg)?.expect("bounds enabled");
    let gamma = s.params.gamma_logderiv;
    let a = &cfg.appendix;
    let fail = |e: appendix::AppendixError| runtime(e);
    let mut report = Report::default();
    report.push(settings_section(&s));
    let mut violated = Vec::new();

    let diag =
        appendix::diagonal_bound_check(&cfg.run.kernel, &a.diagonal_grid, gamma).map_err(fail)?;
    if !diag.satisfied() {
        violated.push("diagonal");
    }
    report.push(output::diagonal_section("diagonal", &diag));

    let h = DensityOnRay::extremal(a.functional_a).map_err(fail)?;
    let closed = appendix::extremal_closed_form(a.functional_a, a.functional_delta);
    let ignored = appendix::y_functional(&h, a.functional_delta, Cutoff::Ignore).map_err(fail)?;
    let rel = (ignored / closed - 1.0).abs();
    if rel > 1e-9 {
        violated.push("functional");
    }
    report.push(
        Section::new("functional")
            .entry("status", if rel <= 1e-9 { "satisfied" } else { "violated" })
            .num("closed_form", closed)
            .num("quadrature_cutoff_ignored", ignored)
            .num("relative_error", rel),
    );

    let min = appendix::extremal_minimality_check(
        a.functional_a,
        a.functional_delta,
        a.trials,
        cfg.run.seed,
    )
    .map_err(fail)?;
    if !min.satisfied() {
        violated.push("minimality");
    }
    report.push(output::minimality_section("minimality", &min));

    if cfg.run.steps == 0 {
        return Err(usage("verify-appendix needs steps >= 1"));
    }
    let (prev, last) = last_two_states(&cfg)?;
    let (alpha, beta) = cfg
        .run
        .policy
        .linear_coefficients(prev.t(), prev.mean())
        .expect("linear mode");
    let step_kernel = cfg
        .run
        .kernel
        .with_coefficients(alpha, beta)
        .map_err(runtime)?;
    let mut sorted = last.wealth().to_vec();
    metrics::sort_ascending(&mut sorted);
    let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p) as usize];
    let lo = q(0.0005)
        .max(sorted[sorted.len() - 1] * 1e-12)
        .max(f64::MIN_POSITIVE)
        * 0.5;
    let grid = appendix::log_grid(lo, q(0.9995) * 2.0, a.propagation_points);
    if gamma > 0.0 {
        match appendix::density_log_derivative_propagation(&prev, &step_kernel, &grid, gamma) {
            Ok(p) => {
                if !p.satisfied() {
                    violated.push("propagation");
                }
                report.push(output::propagation_section("propagation", &p));
            }
            Err(e) => {
                violated.push("propagation");
                report.push(
                    Section::new("propagation")
                        .entry("status", "error")
                        .entry("error", e),
                );
            }
        }
    }

    let (alpha, beta) = cfg
        .run
        .policy
        .linear_coefficients(last.t(), last.mean())
        .expect("linear mode");
    let final_kernel = cfg
        .run
        .kernel
        .with_coefficients(alpha, beta)
        .map_err(runtime)?;
    let params = BoundParams::new(s.params.kappa, s.params.delta_stripe, gamma).map_err(runtime)?;
    let main =
        appendix::main_inequality_check(&last, &final_kernel, &params, a.pairs, cfg.run.seed)
            .map_err(fail)?;
    if !main.satisfied() {
        violated.push("main_inequality");
    }
    report.push(output::main_inequality_section("main_inequality", &main));
    report.push(
        Section::new("summary")
            .entry(
                "status",
                if violated.is_empty() {
                    "satisfied"
                } else {
                    "violated"
                },
            )
            .entry("failed_checks", violated.join(" ")),
    );
    write_report(
        &report,
        common.out.as_deref().or(cfg.output.report.as_deref()),
    )?;
    if violated.is_empty() {
        Ok(())
    } else {
        Err(runtime(format!("checks violated: {}", violated.join(", "))))
    }
}

fn search_threshold(common: &Common) -> CliResult {
    let cfg = load(common)?;
    let s = cfg.search;
    let r = experiments::find_min_stabilizing_salary_fraction(
        &cfg.run, s.c_lo, s.c_hi, s.tol, s.horizon,
    )
    .map_err(|e| match e {
        ExperimentError::InvalidInput(_) => usage(e),
        e => runtime(e),
    })?;
    let mut report = Report::default();
    report.push(output::threshold_section("threshold", &r));
    write_report(
        &report,
        common.out.as_deref().or(cfg.output.report.as_deref()),
    )
}

fn scenarios(out: Option<&Path>, agents: usize, steps: u64, seed: u64) -> CliResult {
    if agents < 2 || steps < experiments::WINDOW_FRACTION * 2 {
        return Err(usage("need at least 2 agents and 10 steps"));
    }
    let mut results = Vec::new();
    for s in experiments::shipped_scenarios(agents, steps, seed) {
        let run = experiments::run_scenario(&s, None).map_err(runtime)?;
        results.push(run.result);
    }
    output::write_summary(open_out(out)?, &results).map_err(io_fail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(main_with_args(["wealthdyn", "frobnicate"]), 2);
        assert_eq!(main_with_args(["wealthdyn", "simulate"]), 2);
        assert_eq!(
            main_with_args(["wealthdyn", "simulate", "--config", "/nonexistent/cfg.toml"]),
            2
        );
        assert_eq!(
            main_with_args(["wealthdyn", "--threads", "0", "gini", "--input", "x"]),
            2
        );
    }
}
