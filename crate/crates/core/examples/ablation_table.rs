//! Ablation table over a handful of seeds, with the paired ordering check.
//!
//!     cargo run --release --example ablation_table

use gtma::benchmark::{run_ablation, AblationVariant, Aggregation, BenchmarkSpec, NamedSpec};
use gtma::{GrpoConfig, Result};

fn main() -> Result<()> {
    let specs = [
        NamedSpec {
            name: "default".into(),
            spec: BenchmarkSpec::default(),
        },
        NamedSpec {
            name: "noisy".into(),
            spec: BenchmarkSpec {
                noise_sigma: 0.5,
                ..BenchmarkSpec::default()
            },
        },
    ];
    let seeds: Vec<u64> = (1..=5).collect();
    let table = run_ablation(
        &specs,
        &GrpoConfig::default(),
        &AblationVariant::ALL,
        &seeds,
        Aggregation::MeanOfInstances,
    )?;

    print!("{:22}", "variant");
    for s in &table.spec_names {
        print!(" {:>16}", format!("{s} open"));
    }
    println!(" {:>9}", "avg drop");
    for row in &table.rows {
        print!("{:22}", row.variant.tag());
        for v in &row.per_spec {
            print!(" {:>16}", format!("{:.4}±{:.4}", v.open.mean, v.open.ci95));
        }
        println!(" {:>9.4}", row.avg_drop);
    }

    let violations = table.ordering_violations();
    if violations.is_empty() {
        println!("no variant beats full");
    }
    for v in violations {
        println!(
            "{} beats full on {} by {:.4} ± {:.4}",
            v.variant.tag(),
            v.spec_name,
            v.mean_gain_over_full,
            v.ci95
        );
    }
    Ok(())
}
