use crate::encoder::{
    AttentionParams, MlpGains, PatchFeatures, Template, TextEncoderParams, VocabularyTable,
};
use crate::error::{Error, Result};
use crate::numeric::{dot, Mat64, Vec64};
use crate::rng::{gaussian_vec, random_unit, seeded, SeededRng};

use super::{
    AttentionInit, BenchmarkSpec, ConceptKind, ConceptSpec, Dataset, Instance, Split,
    MAX_PROTOTYPE_COSINE,
};

const STREAM_ENCODER: u64 = 1;
const STREAM_PROTOTYPES: u64 = 2;
const STREAM_CONTEXT: u64 = 3;
const STREAM_DISTRACTORS: u64 = 4;
const STREAM_ATTENTION: u64 = 5;
const STREAM_PATCHES: u64 = 6;

const PROTOTYPE_RETRIES: usize = 10_000;

const CONTEXT_WORDS: [&str; 3] = ["a", "photo", "of"];

fn draw_prototypes(rng: &mut SeededRng, count: usize, dim: usize) -> Result<Vec<Vec64>> {
    let mut out: Vec<Vec64> = Vec::with_capacity(count);
    while out.len() < count {
        let mut accepted = false;
        for _ in 0..PROTOTYPE_RETRIES {
            let p = random_unit(rng, dim)?;
            if out
                .iter()
                .all(|q| dot(q.as_slice(), p.as_slice()) < MAX_PROTOTYPE_COSINE)
            {
                out.push(p);
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::GenerationFailure(format!(
                "could not place prototype {} of {count} with pairwise cosine < {MAX_PROTOTYPE_COSINE} in {dim} dimensions",
                out.len() + 1
            )));
        }
    }
    Ok(out)
}

/// Builds the vocabulary, encoder, attention maps, concepts and instances for `spec`.
///
/// Vocabulary layout: the context words `a`, `photo`, `of`, then one token per
/// seen concept, then the distractor words. A concept-like word for joint
/// direction `q` is `L·u − Σ context` where the encoder maps `u` to
/// `token_scale · q`, so "a photo of a <word>" encodes exactly to `q`.
pub fn generate_benchmark(spec: &BenchmarkSpec) -> Result<Dataset> {
    spec.validate()?;
    let seed = spec.seed;

    let encoder = TextEncoderParams::random(
        spec.encoder_mode,
        spec.d_tok,
        spec.d_e,
        MlpGains::default(),
        &mut seeded(seed, STREAM_ENCODER),
    )?;

    let prototypes = draw_prototypes(
        &mut seeded(seed, STREAM_PROTOTYPES),
        spec.num_concepts(),
        spec.d_e,
    )?;

    let mut ctx_rng = seeded(seed, STREAM_CONTEXT);
    let ctx_std = spec.token_scale / (spec.d_tok as f64).sqrt();
    let context_rows: Vec<Vec<f64>> = CONTEXT_WORDS
        .iter()
        .map(|_| gaussian_vec(&mut ctx_rng, spec.d_tok, ctx_std))
        .collect();
    let template = Template::new(vec![0, 1, 2, 0], 4)?;
    let seq_len = template.len() as f64;
    let mut context_sum = vec![0.0; spec.d_tok];
    for &id in template.context_ids() {
        for (acc, x) in context_sum.iter_mut().zip(&context_rows[id]) {
            *acc += x;
        }
    }

    let word_for = |direction: &Vec64| -> Result<Vec<f64>> {
        let target: Vec<f64> = direction
            .as_slice()
            .iter()
            .map(|x| x * spec.token_scale)
            .collect();
        let pooled = encoder.solve_pooled(&target)?;
        Ok(pooled
            .iter()
            .zip(&context_sum)
            .map(|(u, c)| seq_len * u - c)
            .collect())
    };

    let mut rows = context_rows;
    let mut names: Vec<String> = CONTEXT_WORDS.iter().map(|s| s.to_string()).collect();
    let mut concepts = Vec::with_capacity(spec.num_concepts());
    for (i, p) in prototypes.iter().enumerate() {
        if i < spec.num_seen {
            let display_name = format!("seen_{i:02}");
            let token_index = rows.len();
            rows.push(word_for(p)?);
            names.push(display_name.clone());
            concepts.push(ConceptSpec {
                concept_id: i,
                display_name,
                prototype: p.clone(),
                kind: ConceptKind::Seen { token_index },
            });
        } else {
            concepts.push(ConceptSpec {
                concept_id: i,
                display_name: format!("ood_{:02}", i - spec.num_seen),
                prototype: p.clone(),
                kind: ConceptKind::Ood,
            });
        }
    }

    let placeholder_token = rows.len();
    let mut distractor_rng = seeded(seed, STREAM_DISTRACTORS);
    for k in 0..spec.num_distractors {
        let q = random_unit(&mut distractor_rng, spec.d_e)?;
        rows.push(word_for(&q)?);
        names.push(format!("word_{k:02}"));
    }
    let vocab = VocabularyTable::new(Mat64::from_rows(rows)?, names)?;

    let attention = match spec.attention {
        AttentionInit::RandomTied => {
            AttentionParams::random_tied(spec.d_k, spec.d_e, &mut seeded(seed, STREAM_ATTENTION))?
        }
        AttentionInit::Identity => AttentionParams::identity(spec.d_e)?,
    };

    let mut patch_rng = seeded(seed, STREAM_PATCHES);
    let mut instances = Vec::with_capacity(spec.num_concepts() * spec.images_per_class);
    for concept in &concepts {
        for k in 0..spec.images_per_class {
            let mut data = Vec::with_capacity(spec.patches_per_image * spec.d_e);
            for _ in 0..spec.patches_per_image {
                let noise = gaussian_vec(&mut patch_rng, spec.d_e, spec.noise_sigma);
                data.extend(
                    concept
                        .prototype
                        .as_slice()
                        .iter()
                        .zip(noise)
                        .map(|(p, n)| p + n),
                );
            }
            instances.push(Instance {
                id: format!("{}/{k:03}", concept.display_name),
                true_concept: concept.concept_id,
                split: if k < spec.support_per_class {
                    Split::Support
                } else {
                    Split::Test
                },
                patches: PatchFeatures::new(Mat64::new(spec.patches_per_image, spec.d_e, data)?),
            });
        }
    }

    Ok(Dataset {
        spec: spec.clone(),
        vocab,
        encoder,
        attention,
        template,
        placeholder_token,
        concepts,
        instances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{alignment_score, EncoderMode};
    use crate::numeric::cosine_sim;
    use crate::PseudoWordEmbedding;

    fn small_spec() -> BenchmarkSpec {
        BenchmarkSpec {
            num_seen: 3,
            num_ood: 2,
            images_per_class: 4,
            support_per_class: 2,
            patches_per_image: 5,
            d_e: 8,
            d_tok: 8,
            d_k: 8,
            num_distractors: 4,
            ..BenchmarkSpec::default()
        }
    }

    #[test]
    fn counts_and_layout() {
        let spec = BenchmarkSpec {
            num_seen: 1,
            num_ood: 1,
            d_e: 2,
            d_tok: 2,
            d_k: 2,
            images_per_class: 3,
            support_per_class: 1,
            patches_per_image: 2,
            ..BenchmarkSpec::default()
        };
        let ds = generate_benchmark(&spec).unwrap();
        assert_eq!(ds.concepts.len(), 2);
        assert!(
            dot(
                ds.concepts[0].prototype.as_slice(),
                ds.concepts[1].prototype.as_slice()
            ) < 0.8
        );
        assert_eq!(ds.instances.len(), 6);
        assert_eq!(ds.test_instances().count(), 4);
        assert_eq!(ds.vocab.len(), 3 + 1 + spec.num_distractors);
        assert_eq!(ds.vocab.token_name(ds.placeholder_token), "word_00");
    }

    #[test]
    fn zero_noise_seen_tokens_align_exactly() {
        for mode in EncoderMode::ALL {
            let spec = BenchmarkSpec {
                noise_sigma: 0.0,
                encoder_mode: mode,
                ..small_spec()
            };
            let ds = generate_benchmark(&spec).unwrap();
            for inst in &ds.instances {
                let concept = &ds.concepts[inst.true_concept];
                let anchor = ds.anchor(inst, true).unwrap();
                let gap = anchor.vector().sub(&concept.prototype).unwrap().norm();
                assert!(gap < 1e-10, "{mode:?}: anchor off prototype by {gap}");
                if let ConceptKind::Seen { token_index } = concept.kind {
                    let z = ds.vocab.embeddings().row_vec(token_index);
                    let s =
                        alignment_score(&anchor, &ds.encoder, &ds.vocab, &ds.template, &z).unwrap();
                    assert!((s - 1.0).abs() < 1e-6, "{mode:?}: seen score {s}");
                }
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_benchmark(&small_spec()).unwrap();
        let b = generate_benchmark(&small_spec()).unwrap();
        assert_eq!(a, b);
        let c = generate_benchmark(&small_spec().with_seed(2)).unwrap();
        assert_ne!(a.concepts[0].prototype, c.concepts[0].prototype);
    }

    #[test]
    fn impossible_separation_fails_loudly() {
        let spec = BenchmarkSpec {
            num_seen: 10,
            num_ood: 10,
            d_e: 1,
            d_tok: 1,
            d_k: 1,
            ..small_spec()
        };
        assert!(matches!(
            generate_benchmark(&spec),
            Err(Error::GenerationFailure(_))
        ));
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(generate_benchmark(&BenchmarkSpec {
            num_ood: 0,
            ..small_spec()
        })
        .is_err());
        assert!(generate_benchmark(&BenchmarkSpec {
            shots: vec![3],
            ..small_spec()
        })
        .is_err());
        assert!(generate_benchmark(&BenchmarkSpec {
            noise_sigma: -0.1,
            ..small_spec()
        })
        .is_err());
        assert!(generate_benchmark(&BenchmarkSpec {
            support_per_class: 9,
            ..small_spec()
        })
        .is_err());
    }

    #[test]
    fn default_spec_anchors_track_prototypes() {
        let ds = generate_benchmark(&BenchmarkSpec::default()).unwrap();
        assert_eq!(ds.instances.len(), 20 * 20);
        let mean_cos = ds
            .instances
            .iter()
            .map(|i| {
                cosine_sim(
                    ds.anchor(i, true).unwrap().vector(),
                    &ds.concepts[i.true_concept].prototype,
                )
                .unwrap()
            })
            .sum::<f64>()
            / ds.instances.len() as f64;
        assert!(mean_cos >= 0.9, "mean anchor/prototype cosine {mean_cos}");
        // every concept word sits on the same sphere around −Σ context
        let _ = PseudoWordEmbedding::new(ds.vocab.embeddings().row_vec(3));
    }
}
