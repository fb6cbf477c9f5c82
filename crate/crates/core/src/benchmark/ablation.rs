use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grpo::GrpoConfig;

use super::stats::Summary;
use super::{
    generate_benchmark, run_baseline, run_gtma, AblationVariant, Aggregation, BenchmarkSpec,
    EvalReport, Method,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSpec {
    pub name: String,
    #[serde(flatten)]
    pub spec: BenchmarkSpec,
}

/// Accuracies of one method on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub spec_name: String,
    pub seed: u64,
    pub method: String,
    pub seen_accuracy: Option<f64>,
    pub ood_accuracy: Option<f64>,
    pub open_accuracy: Option<f64>,
}

impl SeedResult {
    fn from_report(spec_name: &str, r: &EvalReport) -> Self {
        SeedResult {
            spec_name: spec_name.to_string(),
            seed: r.seed,
            method: match r.method {
                Method::Baseline => "baseline".to_string(),
                Method::Gtma(v) => v.tag().to_string(),
            },
            seen_accuracy: r.seen_accuracy,
            ood_accuracy: r.ood_accuracy,
            open_accuracy: r.open_accuracy,
        }
    }
}

/// Mean/std/CI of one method on one spec across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub spec_name: String,
    pub seen: Summary,
    pub ood: Summary,
    pub open: Summary,
}

impl VariantSummary {
    fn of(spec_name: &str, results: &[&SeedResult]) -> Self {
        let col = |f: fn(&SeedResult) -> Option<f64>| {
            Summary::of(&results.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
        };
        VariantSummary {
            spec_name: spec_name.to_string(),
            seen: col(|r| r.seen_accuracy),
            ood: col(|r| r.ood_accuracy),
            open: col(|r| r.open_accuracy),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub per_spec: Vec<VariantSummary>,
    /// Mean over specs of `open(Full) − open(variant)`; positive means worse than Full.
    pub avg_drop: f64,
}

/// An ablated variant whose open accuracy beats Full with its paired 95% interval above zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingViolation {
    pub spec_name: String,
    pub variant: AblationVariant,
    pub mean_gain_over_full: f64,
    pub ci95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub grpo: GrpoConfig,
    pub aggregation: Aggregation,
    pub spec_names: Vec<String>,
    pub baseline: Vec<VariantSummary>,
    pub rows: Vec<AblationRow>,
    pub runs: Vec<SeedResult>,
}

impl AblationTable {
    pub fn row(&self, variant: AblationVariant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    fn open_per_seed(&self, spec_name: &str, method: &str) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.spec_name == spec_name && r.method == method)
            .map(|r| r.open_accuracy.unwrap_or(f64::NAN))
            .collect()
    }

    /// Variants that beat Full by more than the 95% interval of the per-seed
    /// paired difference.
    pub fn ordering_violations(&self) -> Vec<OrderingViolation> {
        let mut out = Vec::new();
        for name in &self.spec_names {
            let full = self.open_per_seed(name, AblationVariant::Full.tag());
            for row in self
                .rows
                .iter()
                .filter(|r| r.variant != AblationVariant::Full)
            {
                let other = self.open_per_seed(name, row.variant.tag());
                let diffs: Vec<f64> = other.iter().zip(&full).map(|(v, f)| v - f).collect();
                let s = Summary::of(&diffs);
                if s.mean > 0.0 && s.lower() > 0.0 {
                    out.push(OrderingViolation {
                        spec_name: name.clone(),
                        variant: row.variant,
                        mean_gain_over_full: s.mean,
                        ci95: s.ci95,
                    });
                }
            }
        }
        out
    }
}

fn run_seed(
    named: &NamedSpec,
    seed: u64,
    config: &GrpoConfig,
    variants: &[AblationVariant],
    aggregation: Aggregation,
) -> Result<Vec<SeedResult>> {
    let ds = generate_benchmark(&named.spec.with_seed(seed))?;
    let mut out = vec![SeedResult::from_report(&named.name, &run_baseline(&ds)?)];
    for &v in variants {
        let r = run_gtma(&ds, config, v, None, aggregation)?;
        out.push(SeedResult::from_report(&named.name, &r));
    }
    Ok(out)
}

/// Runs the baseline and every variant on each spec for each seed. Datasets are
/// shared between variants within a seed. Rows follow the order of `variants`.
pub fn run_ablation(
    specs: &[NamedSpec],
    config: &GrpoConfig,
    variants: &[AblationVariant],
    seeds: &[u64],
    aggregation: Aggregation,
) -> Result<AblationTable> {
    if specs.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "ablation needs at least one spec and one seed".into(),
        ));
    }
    if variants.len() < 2 || !variants.contains(&AblationVariant::Full) {
        return Err(Error::InvalidArgument(
            "ablation needs `full` plus at least one ablated variant".into(),
        ));
    }
    for (i, v) in variants.iter().enumerate() {
        if variants[..i].contains(v) {
            return Err(Error::InvalidArgument(format!(
                "variant `{v}` listed twice"
            )));
        }
    }
    config.validate()?;
    for s in specs {
        s.spec.validate()?;
    }

    let mut runs = Vec::new();
    for named in specs {
        let per_seed = seeds
            .par_iter()
            .map(|&seed| run_seed(named, seed, config, variants, aggregation))
            .collect::<Result<Vec<_>>>()?;
        runs.extend(per_seed.into_iter().flatten());
    }

    let summarize = |spec_name: &str, method: &str| {
        let rs: Vec<&SeedResult> = runs
            .iter()
            .filter(|r| r.spec_name == spec_name && r.method == method)
            .collect();
        VariantSummary::of(spec_name, &rs)
    };
    let baseline = specs
        .iter()
        .map(|s| summarize(&s.name, "baseline"))
        .collect();
    let full: Vec<VariantSummary> = specs
        .iter()
        .map(|s| summarize(&s.name, AblationVariant::Full.tag()))
        .collect();
    let rows = variants
        .iter()
        .map(|&variant| {
            let per_spec: Vec<VariantSummary> = specs
                .iter()
                .map(|s| summarize(&s.name, variant.tag()))
                .collect();
            let avg_drop = per_spec
                .iter()
                .zip(&full)
                .map(|(v, f)| f.open.mean - v.open.mean)
                .sum::<f64>()
                / specs.len() as f64;
            AblationRow {
                variant,
                per_spec,
                avg_drop,
            }
        })
        .collect();

    Ok(AblationTable {
        seeds: seeds.to_vec(),
        grpo: *config,
        aggregation,
        spec_names: specs.iter().map(|s| s.name.clone()).collect(),
        baseline,
        rows,
        runs,
    })
}

/// Few-shot accuracy of the full method at one shot count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRow {
    pub shots: usize,
    pub seen: Summary,
    pub ood: Summary,
    pub open: Summary,
}

/// Full-method accuracy for each shot count in `spec.shots`, over `seeds`.
pub fn few_shot_sweep(
    spec: &BenchmarkSpec,
    config: &GrpoConfig,
    seeds: &[u64],
    aggregation: Aggregation,
) -> Result<Vec<ShotRow>> {
    spec.validate()?;
    config.validate()?;
    if seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "few-shot sweep needs at least one seed".into(),
        ));
    }
    if let Some(&n) = spec.shots.iter().find(|&&n| n > spec.support_per_class) {
        return Err(Error::InvalidArgument(format!(
            "shot size {n} exceeds support_per_class {}",
            spec.support_per_class
        )));
    }
    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            let ds = generate_benchmark(&spec.with_seed(seed))?;
            spec.shots
                .iter()
                .map(|&n| run_gtma(&ds, config, AblationVariant::Full, Some(n), aggregation))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(spec
        .shots
        .iter()
        .enumerate()
        .map(|(k, &shots)| {
            let col = |f: fn(&EvalReport) -> Option<f64>| {
                Summary::of(
                    &per_seed
                        .iter()
                        .filter_map(|reports| f(&reports[k]))
                        .collect::<Vec<_>>(),
                )
            };
            ShotRow {
                shots,
                seen: col(|r| r.seen_accuracy),
                ood: col(|r| r.ood_accuracy),
                open: col(|r| r.open_accuracy),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NamedSpec {
        NamedSpec {
            name: "small".into(),
            spec: BenchmarkSpec {
                num_seen: 3,
                num_ood: 3,
                images_per_class: 6,
                support_per_class: 4,
                patches_per_image: 6,
                d_e: 16,
                d_tok: 16,
                d_k: 16,
                num_distractors: 6,
                shots: vec![1, 2, 4],
                ..BenchmarkSpec::default()
            },
        }
    }

    #[test]
    fn full_row_has_zero_drop() {
        let t = run_ablation(
            &[small()],
            &GrpoConfig::default(),
            &AblationVariant::ALL,
            &[1, 2],
            Aggregation::MeanOfInstances,
        )
        .unwrap();
        assert_eq!(t.rows.len(), 5);
        assert_eq!(t.row(AblationVariant::Full).unwrap().avg_drop, 0.0);
        assert_eq!(t.runs.len(), 2 * 6);
        assert_eq!(t.rows[0].per_spec[0].open.n, 2);
    }

    #[test]
    fn rerun_is_identical() {
        let run = || {
            run_ablation(
                &[small()],
                &GrpoConfig::default(),
                &[AblationVariant::Full, AblationVariant::NoSemanticReg],
                &[7],
                Aggregation::AnchorMean,
            )
            .unwrap()
        };
        assert_eq!(
            serde_json::to_string(&run()).unwrap(),
            serde_json::to_string(&run()).unwrap()
        );
    }

    #[test]
    fn needs_a_comparison() {
        let cfg = GrpoConfig::default();
        let agg = Aggregation::MeanOfInstances;
        assert!(run_ablation(&[small()], &cfg, &[AblationVariant::Full], &[1], agg).is_err());
        assert!(run_ablation(
            &[small()],
            &cfg,
            &[
                AblationVariant::NoAdaptiveLr,
                AblationVariant::NoSemanticReg
            ],
            &[1],
            agg
        )
        .is_err());
        assert!(run_ablation(
            &[small()],
            &cfg,
            &[AblationVariant::Full, AblationVariant::Full],
            &[1],
            agg
        )
        .is_err());
        assert!(run_ablation(&[small()], &cfg, &AblationVariant::ALL, &[], agg).is_err());
    }

    #[test]
    fn sweep_rows_follow_shots() {
        let rows = few_shot_sweep(
            &small().spec,
            &GrpoConfig::default(),
            &[1, 2],
            Aggregation::MeanOfInstances,
        )
        .unwrap();
        assert_eq!(
            rows.iter().map(|r| r.shots).collect::<Vec<_>>(),
            vec![1, 2, 4]
        );
        let too_many = BenchmarkSpec {
            shots: vec![8],
            ..small().spec
        };
        assert!(few_shot_sweep(
            &too_many,
            &GrpoConfig::default(),
            &[1],
            Aggregation::MeanOfInstances
        )
        .is_err());
    }
}
