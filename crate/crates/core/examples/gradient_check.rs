//! Checks the analytic alignment gradient against central differences for
//! every encoder mode, then shows that a perturbed gradient is caught.
//!
//!     cargo run --release --example gradient_check

use gtma::experiment::{run_gradcheck, GradcheckSpec};
use gtma::Result;

fn main() -> Result<()> {
    let spec = GradcheckSpec {
        trials: 30,
        ..GradcheckSpec::default()
    };
    let report = run_gradcheck(&spec, None)?;
    for t in report.trials.iter().take(6) {
        println!("{t:?}");
    }
    println!(
        "{} trials, max relative error {:.3e} (tolerance {:.0e}), passed: {}",
        report.trials.len(),
        report.max_relative_error,
        report.tolerance,
        report.passed
    );

    let broken = run_gradcheck(&spec, Some(7))?;
    let seeds: Vec<u64> = broken.failures().map(|t| t.seed).collect();
    println!(
        "with trial 7 corrupted: passed {}, failing seeds {seeds:?}",
        broken.passed
    );
    Ok(())
}
