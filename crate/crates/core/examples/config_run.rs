//! Load a TOML config and stream the trajectory CSV, as the `simulate`
//! subcommand does.
//!
//!     cargo run --release --example config_run -- examples/configs/quick.toml

use std::io::Write;

use wealthdyn::config::parse_config;
use wealthdyn::dynamics::DynamicsError;
use wealthdyn::output::TrajectoryWriter;
use wealthdyn::trajectory::simulate;

fn main() {
    let path = std::env::args().nth(1).unwrap_or_else(|| {
        concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/quick.toml").into()
    });
    let cfg = match parse_config(path.as_ref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{path}: {e}");
            std::process::exit(2);
        }
    };
    let settings = cfg.bound_settings().unwrap();
    let mut kappas = cfg.run.kappas.clone();
    let records = match &settings {
        Some(s) => {
            kappas = s.required_kappas();
            s.record_names(cfg.run.policy.mode())
        }
        None => vec![],
    };
    let mut w = TrajectoryWriter::new(std::io::stdout().lock(), &kappas, &records).unwrap();
    let out = simulate::<DynamicsError, _>(&cfg.run, settings.as_ref(), |row| {
        w.write_row(row).unwrap();
        Ok(())
    })
    .unwrap();
    w.into_inner().flush().unwrap();
    eprintln!("final gini {:.6}", out.final_metrics.gini);
}
