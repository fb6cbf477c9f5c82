//! Config-driven runs behind the `gtma` binary.
//!
//! Each `cmd_*` renders its result files in memory; [`write_outputs`] then
//! writes the manifest followed by the files, so a run that fails validation
//! or computation leaves nothing on disk.

mod commands;
mod config;
mod gradcheck;
mod output;

pub use commands::{
    check_ablation_variants, cmd_ablate, cmd_eval, cmd_generate, cmd_gradcheck, cmd_optimize,
    load_fixture, AggregateRow, EvalEntry, EvalOptions, EvalOutput, EvalSource, OptimizeResult,
    DATASET_FILE,
};
pub use config::{parse_seed_list, ExperimentConfig, OutputConfig, OutputFormat};
pub use gradcheck::{run_gradcheck, GradcheckReport, GradcheckSpec, TrialResult};
pub use output::{
    fmt_f64, fmt_opt, write_outputs, CommandOutput, OutputFile, RunManifest, MANIFEST_FILE,
};
