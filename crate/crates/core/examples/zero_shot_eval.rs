//! Baseline text embeddings against synthesized pseudo-words on the open pool
//! of seen and OOD concepts, for a single generated dataset.
//!
//!     cargo run --release --example zero_shot_eval

use gtma::benchmark::{
    generate_benchmark, run_baseline, run_gtma, AblationVariant, Aggregation, BenchmarkSpec,
};
use gtma::{GrpoConfig, Result};

fn pct(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{:.1}%", 100.0 * v))
}

fn main() -> Result<()> {
    let ds = generate_benchmark(&BenchmarkSpec::default())?;
    let config = GrpoConfig::default();

    let base = run_baseline(&ds)?;
    let ours = run_gtma(
        &ds,
        &config,
        AblationVariant::Full,
        None,
        Aggregation::MeanOfInstances,
    )?;

    println!("{:10} {:>8} {:>8} {:>8}", "", "seen", "ood", "open");
    for (name, r) in [("baseline", &base), ("synthesis", &ours)] {
        println!(
            "{name:10} {:>8} {:>8} {:>8}",
            pct(r.seen_accuracy),
            pct(r.ood_accuracy),
            pct(r.open_accuracy)
        );
    }
    println!(
        "chance on the open pool: {:.1}%",
        100.0 / ds.spec.num_concepts() as f64
    );
    Ok(())
}
