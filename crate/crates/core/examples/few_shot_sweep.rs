//! OOD accuracy as the number of support images per class grows.
//!
//!     cargo run --release --example few_shot_sweep

use gtma::benchmark::{few_shot_sweep, Aggregation, BenchmarkSpec};
use gtma::{GrpoConfig, Result};

fn main() -> Result<()> {
    let spec = BenchmarkSpec {
        images_per_class: 32,
        support_per_class: 16,
        shots: vec![1, 2, 4, 8, 16],
        noise_sigma: 0.3,
        ..BenchmarkSpec::default()
    };
    let seeds: Vec<u64> = (1..=5).collect();
    let rows = few_shot_sweep(
        &spec,
        &GrpoConfig::default(),
        &seeds,
        Aggregation::MeanOfInstances,
    )?;

    println!("shots   ood              open");
    for r in rows {
        println!(
            "{:5}   {:.4} ± {:.4}  {:.4} ± {:.4}",
            r.shots, r.ood.mean, r.ood.ci95, r.open.mean, r.open.ci95
        );
    }
    Ok(())
}
