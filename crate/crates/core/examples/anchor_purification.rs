//! Attention-refined anchors against the plain patch mean: first on a
//! hand-built cluttered image, then across a generated benchmark.
//!
//!     cargo run --example anchor_purification

use gtma::benchmark::{generate_benchmark, BenchmarkSpec};
use gtma::encoder::{purification_weights, raw_anchor, refine_anchor};
use gtma::{cosine_sim, AttentionParams, Mat64, PatchFeatures, Result, Vec64};

fn main() -> Result<()> {
    // six object patches near e0, two unit-norm background patches along e1.
    // The query is the patch mean, so clutter with a much larger norm than the
    // object would attract the weight instead.
    let object = Vec64::new(vec![1.0, 0.0, 0.0])?;
    let mut rows = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.95, 0.3]];
    for i in 0..6 {
        rows.push(vec![1.0, 0.1 * (i as f64 - 2.5), 0.05 * i as f64]);
    }
    let patches = PatchFeatures::new(Mat64::from_rows(rows)?);
    let sharp = Mat64::identity(3)?.scaled(2.0);
    let attn = AttentionParams::new(sharp.clone(), sharp)?;
    let w = purification_weights(&patches, &attn)?;
    println!("cluttered image, weights {:.3?}", w.as_slice());
    println!(
        "  cos to object: raw {:.4}, refined {:.4}",
        cosine_sim(raw_anchor(&patches)?.vector(), &object)?,
        cosine_sim(refine_anchor(&patches, &attn)?.vector(), &object)?
    );

    let ds = generate_benchmark(&BenchmarkSpec::default())?;

    let inst = ds.instance("ood_00/000")?;
    let w = purification_weights(&inst.patches, &ds.attention)?;
    println!(
        "attention over the {} patches of {}:",
        inst.patches.num_patches(),
        inst.id
    );
    for (i, a) in w.as_slice().iter().enumerate() {
        println!("  patch {i:2}  {a:.4}");
    }

    let (mut raw, mut refined) = (0.0, 0.0);
    for inst in &ds.instances {
        let proto = &ds.concepts[inst.true_concept].prototype;
        raw += cosine_sim(ds.anchor(inst, false)?.vector(), proto)?;
        refined += cosine_sim(ds.anchor(inst, true)?.vector(), proto)?;
    }
    let n = ds.instances.len() as f64;
    println!(
        "mean cos(anchor, prototype) over {} instances",
        ds.instances.len()
    );
    println!("  raw mean pool  {:.4}", raw / n);
    println!("  refined        {:.4}", refined / n);
    Ok(())
}
