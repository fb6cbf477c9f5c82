use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gtma::benchmark::AblationVariant;
use gtma::experiment::{
    check_ablation_variants, cmd_ablate, cmd_eval, cmd_generate, cmd_gradcheck, cmd_optimize,
    load_fixture, parse_seed_list, write_outputs, CommandOutput, EvalOptions, EvalSource,
    ExperimentConfig, GradcheckSpec, OutputFormat, RunManifest,
};
use gtma::{EncoderMode, Error, Result};

/// Test-time pseudo-word synthesis on a synthetic seen/OOD benchmark.
///
/// Exit codes: 0 success, 2 config or usage error, 3 file system error,
/// 4 numeric failure, 5 a requested check failed.
#[derive(Parser)]
#[command(name = "gtma", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output].dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// json, csv or both; overrides `[output].format`.
    #[arg(long)]
    format: Option<OutputFormat>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a dataset fixture.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Optimize the pseudo-word of one fixture instance and dump the trajectory.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fixture: PathBuf,
        #[arg(long)]
        instance: String,
    },
    /// Evaluate the baseline and one variant, per seed and aggregated.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Evaluate this fixture instead of generating one dataset per seed.
        #[arg(long, conflicts_with = "seeds")]
        fixture: Option<PathBuf>,
        /// Seed list such as `1-20` or `1,4,9`.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value = "full")]
        variant: AblationVariant,
        /// Support instances per OOD class (default: all).
        #[arg(long)]
        shots: Option<usize>,
        #[arg(long)]
        baseline_only: bool,
    },
    /// Run the ablation table.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seeds: Option<String>,
        /// Repeatable; overrides the config's `variants`.
        #[arg(long = "variant")]
        variants: Vec<AblationVariant>,
        /// Exit with code 5 if an ablated variant beats `full` beyond its 95% interval.
        #[arg(long)]
        assert_ordering: bool,
    },
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        /// Optional config; only its `[gradcheck]` table is used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        format: Option<OutputFormat>,
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated token dimensions.
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        /// Comma-separated encoder modes.
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<EncoderMode>>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Negative control: perturb the analytic gradient of this trial.
        #[arg(long, hide = true)]
        corrupt_trial: Option<usize>,
    },
}

struct Resolved {
    config: ExperimentConfig,
    out: PathBuf,
    format: OutputFormat,
}

fn resolve(common: &Common) -> Result<Resolved> {
    let config = ExperimentConfig::load(&common.config)?;
    let out = common
        .out
        .clone()
        .or_else(|| config.output.dir.clone())
        .ok_or_else(|| {
            Error::Config("no output directory: pass --out or set [output].dir".into())
        })?;
    let format = common.format.unwrap_or(config.output.format);
    Ok(Resolved {
        config,
        out,
        format,
    })
}

fn seeds_or_config(flag: &Option<String>, config: &ExperimentConfig) -> Result<Vec<u64>> {
    flag.as_deref()
        .map_or_else(|| Ok(config.seed_list()), parse_seed_list)
}

fn finish(
    command: &str,
    dir: &Path,
    hash: Option<String>,
    seeds: Vec<u64>,
    output: &CommandOutput,
) -> Result<()> {
    let manifest = RunManifest::new(command, hash, seeds, output);
    write_outputs(dir, &manifest, output)?;
    print!("{}", output.summary);
    if !output.summary.ends_with('\n') {
        println!();
    }
    println!(
        "wrote {} file(s) to {}",
        output.files.len() + 1,
        dir.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, seed } => {
            let r = resolve(&common)?;
            let seed = seed.unwrap_or(r.config.benchmark.seed);
            let output = cmd_generate(&r.config, seed, r.format)?;
            finish(
                "generate",
                &r.out,
                Some(r.config.hash()?),
                vec![seed],
                &output,
            )
        }
        Command::Optimize {
            common,
            fixture,
            instance,
        } => {
            let r = resolve(&common)?;
            let ds = load_fixture(&fixture)?;
            let output = cmd_optimize(&r.config, &ds, &instance, r.format)?;
            finish(
                "optimize",
                &r.out,
                Some(r.config.hash()?),
                vec![ds.spec.seed],
                &output,
            )
        }
        Command::Eval {
            common,
            fixture,
            seeds,
            variant,
            shots,
            baseline_only,
        } => {
            let r = resolve(&common)?;
            let opts = EvalOptions {
                variant,
                shots,
                baseline_only,
            };
            let (output, seeds) = match fixture {
                Some(path) => {
                    let ds = load_fixture(&path)?;
                    (
                        cmd_eval(&r.config, EvalSource::Fixture(&ds), opts, r.format)?,
                        vec![ds.spec.seed],
                    )
                }
                None => {
                    let seeds = seeds_or_config(&seeds, &r.config)?;
                    (
                        cmd_eval(&r.config, EvalSource::Generate(&seeds), opts, r.format)?,
                        seeds,
                    )
                }
            };
            finish("eval", &r.out, Some(r.config.hash()?), seeds, &output)
        }
        Command::Ablate {
            common,
            seeds,
            variants,
            assert_ordering,
        } => {
            let r = resolve(&common)?;
            let seeds = seeds_or_config(&seeds, &r.config)?;
            let variants = if variants.is_empty() {
                r.config.variants.clone()
            } else {
                variants
            };
            check_ablation_variants(&variants)?;
            let (output, _, violations) = cmd_ablate(&r.config, &seeds, &variants, r.format)?;
            finish("ablate", &r.out, Some(r.config.hash()?), seeds, &output)?;
            if assert_ordering && !violations.is_empty() {
                let list: Vec<String> = violations
                    .iter()
                    .map(|v| {
                        format!(
                            "{} on {} (+{:.4} ± {:.4})",
                            v.variant, v.spec_name, v.mean_gain_over_full, v.ci95
                        )
                    })
                    .collect();
                return Err(Error::Assertion(format!(
                    "ablated variants beat full: {}",
                    list.join(", ")
                )));
            }
            Ok(())
        }
        Command::Gradcheck {
            config,
            out,
            format,
            trials,
            dims,
            modes,
            tolerance,
            seed,
            corrupt_trial,
        } => {
            let (mut spec, hash, cfg_out, cfg_format) = match config {
                Some(path) => {
                    let c = ExperimentConfig::load(&path)?;
                    (
                        c.gradcheck.clone(),
                        Some(c.hash()?),
                        c.output.dir.clone(),
                        c.output.format,
                    )
                }
                None => (
                    GradcheckSpec::default(),
                    None,
                    None,
                    OutputFormat::default(),
                ),
            };
            spec.trials = trials.unwrap_or(spec.trials);
            spec.dims = dims.unwrap_or(spec.dims);
            spec.modes = modes.unwrap_or(spec.modes);
            spec.tolerance = tolerance.unwrap_or(spec.tolerance);
            spec.seed = seed.unwrap_or(spec.seed);
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;

            let (output, report) =
                cmd_gradcheck(&spec, corrupt_trial, format.unwrap_or(cfg_format))?;
            match out.or(cfg_out) {
                Some(dir) => finish("gradcheck", &dir, hash, vec![spec.seed], &output)?,
                None => print!("{}", output.summary),
            }
            if !report.passed {
                let seeds: Vec<String> = report.failures().map(|t| t.seed.to_string()).collect();
                return Err(Error::Assertion(format!(
                    "gradient check failed for trial seed(s) {}",
                    seeds.join(", ")
                )));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
