//! Synthesizes a pseudo-word for one OOD image and prints the optimizer trace.
//!
//!     cargo run --example pseudo_word_optimization

use gtma::benchmark::{generate_benchmark, BenchmarkSpec};
use gtma::grpo::nearest_row;
use gtma::{grpo_run, GrpoConfig, Result};

fn main() -> Result<()> {
    let ds = generate_benchmark(&BenchmarkSpec::default())?;
    let inst = ds.instance("ood_02/005")?;
    let anchor = ds.anchor(inst, true)?;
    let config = GrpoConfig::default();

    let traj = grpo_run(&anchor, &ds.encoder, &ds.vocab, &ds.template, &config)?;

    println!(" t      S         |g|       rho      eta");
    for s in &traj.steps {
        println!(
            "{:2}  {:.6}  {:.3e}  {:+.4}  {:.5}",
            s.t, s.score, s.grad_norm, s.rho, s.eta
        );
    }
    println!("final S = {:.6}", traj.final_score);

    let start = nearest_row(traj.z_init.vector(), &ds.vocab)?;
    let end = nearest_row(traj.z_star.vector(), &ds.vocab)?;
    println!(
        "nearest word: {} -> {} (true concept {})",
        ds.vocab.token_name(start),
        ds.vocab.token_name(end),
        ds.concepts[inst.true_concept].display_name,
    );
    Ok(())
}
