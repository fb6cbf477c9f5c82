use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::VisualAnchor;
use crate::error::{Error, Result};
use crate::grpo::{init_pseudo_word, optimize_from, GrpoConfig, PseudoWordEmbedding};
use crate::numeric::{cosine_sim, l2_normalize, Vec64};

use super::{AblationVariant, BenchmarkSpec, ConceptKind, Dataset};

/// How instance-level results become one class pseudo-word.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Optimize every support instance, then average the `z*`.
    #[default]
    MeanOfInstances,
    /// Average the support anchors, then optimize once.
    AnchorMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    Gtma(AblationVariant),
}

impl Method {
    fn refined_test_anchors(self) -> bool {
        match self {
            Method::Baseline => true,
            Method::Gtma(v) => v.uses_refined_anchor(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub concept_id: usize,
    pub display_name: String,
    pub seen: bool,
    pub correct: usize,
    pub total: usize,
}

/// Accuracies are `None` when their pool is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub shots: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub aggregation: Option<Aggregation>,
    pub seen_accuracy: Option<f64>,
    pub ood_accuracy: Option<f64>,
    pub open_accuracy: Option<f64>,
    pub seen_total: usize,
    pub ood_total: usize,
    pub per_class: Vec<ClassCount>,
    pub spec: BenchmarkSpec,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub grpo: Option<GrpoConfig>,
}

/// Synthesized pseudo-word for one OOD class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSynthesis {
    pub concept_id: usize,
    pub support_used: usize,
    pub pseudo_word: PseudoWordEmbedding,
    pub text_embedding: Vec64,
    /// Mean alignment of the optimized (or initial) pseudo-words with their own anchors.
    pub mean_support_score: f64,
}

/// Per-concept text embeddings without synthesis: seen concepts use their
/// own token, every OOD concept shares the placeholder token.
pub fn baseline_text_embeddings(ds: &Dataset) -> Result<Vec<Vec64>> {
    let prompt = ds.prompt()?;
    let placeholder = prompt.encode(&ds.vocab.embeddings().row_vec(ds.placeholder_token))?;
    ds.concepts
        .iter()
        .map(|c| match c.kind {
            ConceptKind::Seen { token_index } => {
                prompt.encode(&ds.vocab.embeddings().row_vec(token_index))
            }
            ConceptKind::Ood => Ok(placeholder.clone()),
        })
        .collect()
}

fn instance_pseudo_word(
    ds: &Dataset,
    anchor: &VisualAnchor,
    config: &GrpoConfig,
    variant: AblationVariant,
) -> Result<(PseudoWordEmbedding, f64)> {
    let prompt = ds.prompt()?;
    let z0 = init_pseudo_word(anchor, &ds.vocab, &ds.encoder, config.init)?;
    if variant.optimizes() {
        let traj = optimize_from(anchor, &prompt, &variant.adjust(config), z0)?;
        Ok((traj.z_star, traj.final_score))
    } else {
        let s = prompt.score(anchor, z0.vector())?;
        Ok((z0, s))
    }
}

/// Synthesizes one pseudo-word per OOD class from its support instances.
///
/// `shots` limits each class to its first `n` support instances; `None` uses
/// all of them. Support instances are grouped by class but carry no label
/// text.
pub fn gtma_class_anchors(
    ds: &Dataset,
    config: &GrpoConfig,
    variant: AblationVariant,
    shots: Option<usize>,
    aggregation: Aggregation,
) -> Result<Vec<ClassSynthesis>> {
    config.validate_for(&ds.vocab)?;
    if shots == Some(0) {
        return Err(Error::InvalidArgument("shots must be >= 1".into()));
    }
    let prompt = ds.prompt()?;
    let refined = variant.uses_refined_anchor();

    ds.ood_concepts()
        .map(|concept| {
            let support: Vec<_> = ds
                .support_of(concept.concept_id)
                .take(shots.unwrap_or(usize::MAX))
                .collect();
            if support.is_empty() || shots.is_some_and(|n| support.len() < n) {
                return Err(Error::InvalidArgument(format!(
                    "class {} has {} support instances, {} requested",
                    concept.display_name,
                    support.len(),
                    shots.map_or("at least 1".to_string(), |n| n.to_string())
                )));
            }
            let anchors = support
                .iter()
                .map(|inst| ds.anchor(inst, refined))
                .collect::<Result<Vec<_>>>()?;

            let (pseudo_word, mean_support_score) = match aggregation {
                Aggregation::MeanOfInstances => {
                    let runs = anchors
                        .par_iter()
                        .map(|a| instance_pseudo_word(ds, a, config, variant))
                        .collect::<Result<Vec<_>>>()?;
                    let z = Vec64::mean_of(runs.iter().map(|(z, _)| z.vector()))?;
                    let s = runs.iter().map(|(_, s)| s).sum::<f64>() / runs.len() as f64;
                    (PseudoWordEmbedding::new(z), s)
                }
                Aggregation::AnchorMean => {
                    let mean = Vec64::mean_of(anchors.iter().map(VisualAnchor::vector))?;
                    let anchor = VisualAnchor::from_vector(&l2_normalize(&mean)?)?;
                    instance_pseudo_word(ds, &anchor, config, variant)?
                }
            };
            let text_embedding = prompt.encode(pseudo_word.vector())?;
            Ok(ClassSynthesis {
                concept_id: concept.concept_id,
                support_used: support.len(),
                pseudo_word,
                text_embedding,
                mean_support_score,
            })
        })
        .collect()
}

/// Classifies every test instance by the highest cosine between its anchor and
/// the per-concept text embeddings (ties go to the lowest concept index).
pub fn evaluate(ds: &Dataset, class_embeddings: &[Vec64], method: Method) -> Result<EvalReport> {
    if class_embeddings.len() != ds.concepts.len() {
        return Err(Error::DimMismatch {
            expected: ds.concepts.len(),
            actual: class_embeddings.len(),
        });
    }
    let mut per_class: Vec<ClassCount> = ds
        .concepts
        .iter()
        .map(|c| ClassCount {
            concept_id: c.concept_id,
            display_name: c.display_name.clone(),
            seen: c.is_seen(),
            correct: 0,
            total: 0,
        })
        .collect();

    let refined = method.refined_test_anchors();
    for inst in ds.test_instances() {
        let anchor = ds.anchor(inst, refined)?;
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (j, e) in class_embeddings.iter().enumerate() {
            let s = cosine_sim(anchor.vector(), e)?;
            if s > best_score {
                best = j;
                best_score = s;
            }
        }
        let counts = &mut per_class[inst.true_concept];
        counts.total += 1;
        if best == inst.true_concept {
            counts.correct += 1;
        }
    }

    let pool = |seen: Option<bool>| {
        let (correct, total) = per_class
            .iter()
            .filter(|c| seen.is_none_or(|s| c.seen == s))
            .fold((0, 0), |(a, b), c| (a + c.correct, b + c.total));
        let acc = (total > 0).then(|| correct as f64 / total as f64);
        (acc, total)
    };
    let (seen_accuracy, seen_total) = pool(Some(true));
    let (ood_accuracy, ood_total) = pool(Some(false));
    let (open_accuracy, _) = pool(None);

    Ok(EvalReport {
        method,
        seed: ds.spec.seed,
        shots: None,
        aggregation: None,
        seen_accuracy,
        ood_accuracy,
        open_accuracy,
        seen_total,
        ood_total,
        per_class,
        spec: ds.spec.clone(),
        grpo: None,
    })
}

pub fn run_baseline(ds: &Dataset) -> Result<EvalReport> {
    evaluate(ds, &baseline_text_embeddings(ds)?, Method::Baseline)
}

/// Seen concepts keep their tokens; OOD concepts get synthesized pseudo-words.
pub fn run_gtma(
    ds: &Dataset,
    config: &GrpoConfig,
    variant: AblationVariant,
    shots: Option<usize>,
    aggregation: Aggregation,
) -> Result<EvalReport> {
    let mut embeddings = baseline_text_embeddings(ds)?;
    for synth in gtma_class_anchors(ds, config, variant, shots, aggregation)? {
        embeddings[synth.concept_id] = synth.text_embedding;
    }
    let mut report = evaluate(ds, &embeddings, Method::Gtma(variant))?;
    report.shots = shots;
    report.aggregation = Some(aggregation);
    report.grpo = Some(variant.adjust(config));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::{generate_benchmark, Split};
    use crate::grpo::InitMode;

    fn spec() -> BenchmarkSpec {
        BenchmarkSpec {
            num_seen: 4,
            num_ood: 4,
            images_per_class: 6,
            support_per_class: 3,
            patches_per_image: 8,
            d_e: 16,
            d_tok: 16,
            d_k: 16,
            num_distractors: 8,
            ..BenchmarkSpec::default()
        }
    }

    #[test]
    fn placeholder_is_shared() {
        let ds = generate_benchmark(&spec()).unwrap();
        let e = baseline_text_embeddings(&ds).unwrap();
        let ood: Vec<_> = ds.ood_concepts().map(|c| &e[c.concept_id]).collect();
        assert!(ood.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn zero_noise_baseline_seen_is_exact() {
        let ds = generate_benchmark(&BenchmarkSpec {
            noise_sigma: 0.0,
            ..spec()
        })
        .unwrap();
        let r = run_baseline(&ds).unwrap();
        assert_eq!(r.seen_accuracy, Some(1.0));
        assert_eq!(r.seen_total + r.ood_total, ds.test_instances().count());
    }

    #[test]
    fn zero_noise_generous_gtma_recovers_prototypes() {
        let ds = generate_benchmark(&BenchmarkSpec {
            noise_sigma: 0.0,
            ..spec()
        })
        .unwrap();
        let config = GrpoConfig {
            iterations: 200,
            eta0: 0.05,
            ..GrpoConfig::default()
        };
        let synth = gtma_class_anchors(
            &ds,
            &config,
            AblationVariant::Full,
            None,
            Aggregation::MeanOfInstances,
        )
        .unwrap();
        for s in &synth {
            let cos = cosine_sim(&s.text_embedding, &ds.concepts[s.concept_id].prototype).unwrap();
            assert!(cos >= 0.99, "class {} cosine {cos}", s.concept_id);
        }
    }

    #[test]
    fn one_shot_is_that_instance() {
        let ds = generate_benchmark(&spec()).unwrap();
        let config = GrpoConfig::default();
        let synth = gtma_class_anchors(
            &ds,
            &config,
            AblationVariant::Full,
            Some(1),
            Aggregation::MeanOfInstances,
        )
        .unwrap();
        let concept = ds.ood_concepts().next().unwrap().concept_id;
        let first = ds.support_of(concept).next().unwrap();
        let anchor = ds.anchor(first, true).unwrap();
        let traj =
            crate::grpo::grpo_run(&anchor, &ds.encoder, &ds.vocab, &ds.template, &config).unwrap();
        assert_eq!(synth[0].pseudo_word, traj.z_star);
        assert_eq!(synth[0].support_used, 1);
    }

    #[test]
    fn no_opt_uses_initializations() {
        let ds = generate_benchmark(&spec()).unwrap();
        let config = GrpoConfig::default();
        let synth = gtma_class_anchors(
            &ds,
            &config,
            AblationVariant::NoPseudoWordOpt,
            None,
            Aggregation::MeanOfInstances,
        )
        .unwrap();
        let concept = ds.ood_concepts().next().unwrap().concept_id;
        let inits: Vec<Vec64> = ds
            .support_of(concept)
            .map(|i| {
                let a = ds.anchor(i, true).unwrap();
                init_pseudo_word(&a, &ds.vocab, &ds.encoder, InitMode::NearestVocab)
                    .unwrap()
                    .into_vector()
            })
            .collect();
        assert_eq!(
            synth[0].pseudo_word.vector(),
            &Vec64::mean_of(&inits).unwrap()
        );
    }

    #[test]
    fn too_many_shots_is_rejected() {
        let ds = generate_benchmark(&spec()).unwrap();
        let r = gtma_class_anchors(
            &ds,
            &GrpoConfig::default(),
            AblationVariant::Full,
            Some(4),
            Aggregation::MeanOfInstances,
        );
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn empty_pool_is_absent_not_zero() {
        let mut ds = generate_benchmark(&spec()).unwrap();
        let ood: Vec<usize> = ds.ood_concepts().map(|c| c.concept_id).collect();
        for inst in ds
            .instances
            .iter_mut()
            .filter(|i| ood.contains(&i.true_concept))
        {
            inst.split = Split::Support;
        }
        let r = run_baseline(&ds).unwrap();
        assert_eq!(r.ood_accuracy, None);
        assert_eq!(r.ood_total, 0);
        assert!(r.seen_accuracy.is_some());
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"ood_accuracy\":null"));
    }

    #[test]
    fn accuracies_are_consistent() {
        let ds = generate_benchmark(&spec()).unwrap();
        for variant in AblationVariant::ALL {
            let r = run_gtma(
                &ds,
                &GrpoConfig::default(),
                variant,
                None,
                Aggregation::MeanOfInstances,
            )
            .unwrap();
            let correct: usize = r.per_class.iter().map(|c| c.correct).sum();
            let total: usize = r.per_class.iter().map(|c| c.total).sum();
            assert_eq!(total, r.seen_total + r.ood_total);
            assert_eq!(r.open_accuracy, Some(correct as f64 / total as f64));
            for acc in [r.seen_accuracy, r.ood_accuracy, r.open_accuracy]
                .into_iter()
                .flatten()
            {
                assert!((0.0..=1.0).contains(&acc));
            }
        }
    }
}
