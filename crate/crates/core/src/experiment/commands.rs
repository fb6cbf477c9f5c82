use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmark::stats::Summary;
use crate::benchmark::{
    generate_benchmark, run_ablation, run_baseline, run_gtma, AblationTable, AblationVariant,
    Dataset, EvalReport, OrderingViolation, Split, VariantSummary,
};
use crate::error::{Error, Result};
use crate::grpo::{grpo_run, objective_value, Objective, Trajectory};

use super::config::{ExperimentConfig, OutputFormat};
use super::gradcheck::{run_gradcheck, GradcheckReport, GradcheckSpec};
use super::output::{fmt_f64, fmt_opt, CommandOutput, OutputFile};

pub const DATASET_FILE: &str = "dataset.json";

fn split_tag(s: Split) -> &'static str {
    match s {
        Split::Support => "support",
        Split::Test => "test",
    }
}

/// Reads a dataset fixture written by [`cmd_generate`].
pub fn load_fixture(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ds: Dataset = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    ds.prompt()?;
    if let Some(bad) = ds
        .instances
        .iter()
        .find(|i| i.true_concept >= ds.concepts.len())
    {
        return Err(Error::Config(format!(
            "instance {} names an unknown concept",
            bad.id
        )));
    }
    Ok(ds)
}

/// Generates the benchmark for `seed` and renders it as a fixture.
pub fn cmd_generate(
    config: &ExperimentConfig,
    seed: u64,
    format: OutputFormat,
) -> Result<CommandOutput> {
    let ds = generate_benchmark(&config.benchmark.with_seed(seed))?;
    let mut files = vec![OutputFile::json(DATASET_FILE, &ds)?];
    if format.csv() {
        let rows: Vec<Vec<String>> = ds
            .instances
            .iter()
            .map(|i| {
                vec![
                    i.id.clone(),
                    i.true_concept.to_string(),
                    ds.concepts[i.true_concept].display_name.clone(),
                    split_tag(i.split).to_string(),
                ]
            })
            .collect();
        files.push(OutputFile::csv(
            "instances.csv",
            &["id", "concept_id", "concept", "split"],
            &rows,
        )?);
    }
    let seen = ds.concepts.iter().filter(|c| c.is_seen()).count();
    let test = ds.test_instances().count();
    let summary = format!(
        "seed {seed}: {} concepts ({seen} seen, {} ood), {} instances ({} support, {test} test), vocabulary {} x {}",
        ds.concepts.len(),
        ds.concepts.len() - seen,
        ds.instances.len(),
        ds.instances.len() - test,
        ds.vocab.len(),
        ds.vocab.dim(),
    );
    Ok(CommandOutput { files, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub instance_id: String,
    pub trajectory: Trajectory,
    pub objective: Objective,
}

/// Purifies one instance's anchor and runs the optimizer on it.
pub fn cmd_optimize(
    config: &ExperimentConfig,
    ds: &Dataset,
    instance_id: &str,
    format: OutputFormat,
) -> Result<CommandOutput> {
    let inst = ds.instance(instance_id)?;
    let anchor = ds.anchor(inst, true)?;
    let trajectory = grpo_run(&anchor, &ds.encoder, &ds.vocab, &ds.template, &config.grpo)?;
    let objective = objective_value(
        &trajectory.z_star,
        &anchor,
        &ds.encoder,
        &ds.vocab,
        &ds.template,
        &config.grpo,
    )?;
    let summary = format!(
        "{instance_id}: {} steps, final S = {:.6}, R = {:.6e}",
        trajectory.steps.len(),
        objective.score,
        objective.regularizer
    );
    let mut files = Vec::new();
    if format.csv() {
        let rows: Vec<Vec<String>> = trajectory
            .steps
            .iter()
            .map(|s| {
                vec![
                    s.t.to_string(),
                    fmt_f64(s.score),
                    fmt_f64(s.grad_norm),
                    fmt_f64(s.rho),
                    fmt_f64(s.eta),
                    fmt_f64(s.reg_norm),
                ]
            })
            .collect();
        files.push(OutputFile::csv(
            "trajectory.csv",
            &["t", "score", "grad_norm", "rho", "eta", "reg_norm"],
            &rows,
        )?);
    }
    if format.json() {
        files.push(OutputFile::json(
            "trajectory.json",
            &OptimizeResult {
                instance_id: instance_id.to_string(),
                trajectory,
                objective,
            },
        )?);
    }
    Ok(CommandOutput { files, summary })
}

/// Where `eval` gets its data from.
#[derive(Debug, Clone)]
pub enum EvalSource<'a> {
    Fixture(&'a Dataset),
    Generate(&'a [u64]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub seed: u64,
    pub baseline: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gtma: Option<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub seen: Summary,
    pub ood: Summary,
    pub open: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub reports: Vec<EvalEntry>,
    pub aggregate: Vec<AggregateRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub variant: AblationVariant,
    pub shots: Option<usize>,
    pub baseline_only: bool,
}

fn aggregate(method: &str, reports: &[&EvalReport]) -> AggregateRow {
    let col = |f: fn(&EvalReport) -> Option<f64>| {
        Summary::of(&reports.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
    };
    AggregateRow {
        method: method.to_string(),
        seen: col(|r| r.seen_accuracy),
        ood: col(|r| r.ood_accuracy),
        open: col(|r| r.open_accuracy),
    }
}

fn eval_one(config: &ExperimentConfig, ds: &Dataset, opts: EvalOptions) -> Result<EvalEntry> {
    let gtma = if opts.baseline_only {
        None
    } else {
        Some(run_gtma(
            ds,
            &config.grpo,
            opts.variant,
            opts.shots,
            config.aggregation,
        )?)
    };
    Ok(EvalEntry {
        seed: ds.spec.seed,
        baseline: run_baseline(ds)?,
        gtma,
    })
}

/// Baseline and (unless `baseline_only`) one method variant, per seed plus mean/std rows.
pub fn cmd_eval(
    config: &ExperimentConfig,
    source: EvalSource<'_>,
    opts: EvalOptions,
    format: OutputFormat,
) -> Result<CommandOutput> {
    let reports = match source {
        EvalSource::Fixture(ds) => vec![eval_one(config, ds, opts)?],
        EvalSource::Generate(seeds) => seeds
            .par_iter()
            .map(|&seed| {
                eval_one(
                    config,
                    &generate_benchmark(&config.benchmark.with_seed(seed))?,
                    opts,
                )
            })
            .collect::<Result<Vec<_>>>()?,
    };

    let baselines: Vec<&EvalReport> = reports.iter().map(|e| &e.baseline).collect();
    let mut agg = vec![aggregate("baseline", &baselines)];
    if !opts.baseline_only {
        let gtma: Vec<&EvalReport> = reports.iter().filter_map(|e| e.gtma.as_ref()).collect();
        agg.push(aggregate(opts.variant.tag(), &gtma));
    }

    let mut summary = String::new();
    for row in &agg {
        summary.push_str(&format!(
            "{:<22} n={:<3} seen {:.4}  ood {:.4}  open {:.4}\n",
            row.method, row.open.n, row.seen.mean, row.ood.mean, row.open.mean
        ));
    }

    let mut files = Vec::new();
    if format.csv() {
        let per_seed: Vec<Vec<String>> = reports
            .iter()
            .flat_map(|e| {
                std::iter::once((&e.baseline, "baseline"))
                    .chain(e.gtma.as_ref().map(|g| (g, opts.variant.tag())))
            })
            .map(|(r, method)| {
                vec![
                    r.seed.to_string(),
                    method.to_string(),
                    fmt_opt(r.seen_accuracy),
                    fmt_opt(r.ood_accuracy),
                    fmt_opt(r.open_accuracy),
                    r.seen_total.to_string(),
                    r.ood_total.to_string(),
                ]
            })
            .collect();
        files.push(OutputFile::csv(
            "eval.csv",
            &[
                "seed",
                "method",
                "seen_accuracy",
                "ood_accuracy",
                "open_accuracy",
                "seen_total",
                "ood_total",
            ],
            &per_seed,
        )?);
        let rows: Vec<Vec<String>> = agg
            .iter()
            .map(|a| {
                vec![
                    a.method.clone(),
                    a.open.n.to_string(),
                    fmt_f64(a.seen.mean),
                    fmt_f64(a.seen.std),
                    fmt_f64(a.ood.mean),
                    fmt_f64(a.ood.std),
                    fmt_f64(a.open.mean),
                    fmt_f64(a.open.std),
                ]
            })
            .collect();
        files.push(OutputFile::csv(
            "eval_aggregate.csv",
            &[
                "method",
                "n",
                "seen_mean",
                "seen_std",
                "ood_mean",
                "ood_std",
                "open_mean",
                "open_std",
            ],
            &rows,
        )?);
    }
    if format.json() {
        files.push(OutputFile::json(
            "eval.json",
            &EvalOutput {
                reports,
                aggregate: agg,
            },
        )?);
    }
    Ok(CommandOutput { files, summary })
}

/// Validates the variant list of an ablation request.
pub fn check_ablation_variants(variants: &[AblationVariant]) -> Result<()> {
    if variants.len() < 2 {
        return Err(Error::Config(
            "ablation needs a comparison: list `full` and at least one ablated variant".into(),
        ));
    }
    if !variants.contains(&AblationVariant::Full) {
        return Err(Error::Config(
            "ablation drops are measured against `full`, which is missing".into(),
        ));
    }
    Ok(())
}

fn summary_cells(s: &VariantSummary) -> Vec<String> {
    vec![
        s.spec_name.clone(),
        fmt_f64(s.seen.mean),
        fmt_f64(s.seen.std),
        fmt_f64(s.ood.mean),
        fmt_f64(s.ood.std),
        fmt_f64(s.open.mean),
        fmt_f64(s.open.std),
        fmt_f64(s.open.ci95),
    ]
}

/// The ablation table and any ordering violations found in it.
pub fn cmd_ablate(
    config: &ExperimentConfig,
    seeds: &[u64],
    variants: &[AblationVariant],
    format: OutputFormat,
) -> Result<(CommandOutput, AblationTable, Vec<OrderingViolation>)> {
    check_ablation_variants(variants)?;
    let table = run_ablation(
        &config.named_specs(),
        &config.grpo,
        variants,
        seeds,
        config.aggregation,
    )?;
    let violations = table.ordering_violations();

    let mut summary = format!("{:<22} {:>10} {:>10}\n", "variant", "open", "avg_drop");
    for row in &table.rows {
        let open =
            row.per_spec.iter().map(|s| s.open.mean).sum::<f64>() / row.per_spec.len() as f64;
        summary.push_str(&format!(
            "{:<22} {:>10.4} {:>10.4}\n",
            row.variant.tag(),
            open,
            row.avg_drop
        ));
    }

    let mut files = Vec::new();
    if format.csv() {
        let mut rows: Vec<Vec<String>> = table
            .baseline
            .iter()
            .map(|s| {
                let mut r = vec!["baseline".to_string()];
                r.extend(summary_cells(s));
                r.push(String::new());
                r
            })
            .collect();
        for row in &table.rows {
            for s in &row.per_spec {
                let mut r = vec![row.variant.tag().to_string()];
                r.extend(summary_cells(s));
                r.push(fmt_f64(row.avg_drop));
                rows.push(r);
            }
        }
        files.push(OutputFile::csv(
            "ablation.csv",
            &[
                "method",
                "spec",
                "seen_mean",
                "seen_std",
                "ood_mean",
                "ood_std",
                "open_mean",
                "open_std",
                "open_ci95",
                "avg_drop",
            ],
            &rows,
        )?);
        let runs: Vec<Vec<String>> = table
            .runs
            .iter()
            .map(|r| {
                vec![
                    r.spec_name.clone(),
                    r.seed.to_string(),
                    r.method.clone(),
                    fmt_opt(r.seen_accuracy),
                    fmt_opt(r.ood_accuracy),
                    fmt_opt(r.open_accuracy),
                ]
            })
            .collect();
        files.push(OutputFile::csv(
            "ablation_runs.csv",
            &[
                "spec",
                "seed",
                "method",
                "seen_accuracy",
                "ood_accuracy",
                "open_accuracy",
            ],
            &runs,
        )?);
    }
    if format.json() {
        files.push(OutputFile::json("ablation.json", &table)?);
    }
    Ok((CommandOutput { files, summary }, table, violations))
}

/// Gradient check report; failing trials are listed in the summary with their seeds.
pub fn cmd_gradcheck(
    spec: &GradcheckSpec,
    corrupt_trial: Option<usize>,
    format: OutputFormat,
) -> Result<(CommandOutput, GradcheckReport)> {
    let report = run_gradcheck(spec, corrupt_trial)?;
    let mut summary = format!(
        "{} trials, max relative error {:.3e} (tolerance {:.1e}): {}\n",
        report.trials.len(),
        report.max_relative_error,
        report.tolerance,
        if report.passed { "pass" } else { "FAIL" }
    );
    for t in report.failures() {
        summary.push_str(&format!(
            "  trial {} seed {} mode {} d_tok {}: relative error {:.3e}\n",
            t.trial,
            t.seed,
            t.mode.tag(),
            t.d_tok,
            t.relative_error
        ));
    }
    let mut files = Vec::new();
    if format.csv() {
        let rows: Vec<Vec<String>> = report
            .trials
            .iter()
            .map(|t| {
                vec![
                    t.trial.to_string(),
                    t.seed.to_string(),
                    t.mode.tag().to_string(),
                    t.d_tok.to_string(),
                    t.d_e.to_string(),
                    fmt_f64(t.relative_error),
                    t.passed.to_string(),
                ]
            })
            .collect();
        files.push(OutputFile::csv(
            "gradcheck.csv",
            &[
                "trial",
                "seed",
                "mode",
                "d_tok",
                "d_e",
                "relative_error",
                "passed",
            ],
            &rows,
        )?);
    }
    if format.json() {
        files.push(OutputFile::json("gradcheck.json", &report)?);
    }
    Ok((CommandOutput { files, summary }, report))
}
