//! The three salary regimes side by side: none, a constant salary, and a
//! salary proportional to mean wealth. Writes the summary CSV to stdout.
//!
//!     cargo run --release --example salary_policies [N] [T]

use wealthdyn::experiments::{run_scenario, shipped_scenarios};
use wealthdyn::output::write_summary;

fn main() {
    let mut args = std::env::args().skip(1);
    let agents: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1500);

    let mut results = Vec::new();
    for s in shipped_scenarios(agents, steps, 7) {
        let run = run_scenario(&s, None).unwrap();
        let sm = &run.result.summary;
        eprintln!(
            "{:<16} {:<24} gini {:.4} (max {:.4})  cv {:.3}  {}",
            s.name, s.parameter, sm.final_gini, sm.max_gini, sm.final_cv, run.result.verdict
        );
        results.push(run.result);
    }
    write_summary(std::io::stdout().lock(), &results).unwrap();
}
