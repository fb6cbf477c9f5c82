use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmark::{AblationVariant, Aggregation, BenchmarkSpec, NamedSpec};
use crate::error::{Error, Result};
use crate::grpo::GrpoConfig;

use super::gradcheck::GradcheckSpec;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
    #[default]
    Both,
}

impl OutputFormat {
    pub fn json(self) -> bool {
        self != OutputFormat::Csv
    }

    pub fn csv(self) -> bool {
        self != OutputFormat::Json
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            "both" => Ok(OutputFormat::Both),
            _ => Err(Error::Config(format!(
                "unknown format `{s}` (expected json, csv or both)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

fn all_variants() -> Vec<AblationVariant> {
    AblationVariant::ALL.to_vec()
}

/// One experiment, as read from a TOML file.
///
/// `[benchmark]` and `[grpo]` are mandatory, and inside `[grpo]` so are
/// `eta0`, `lambda`, `beta`, `gamma` and `iterations`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkSpec,
    pub grpo: GrpoConfig,
    /// Seeds for multi-seed commands; empty means `[benchmark].seed` alone.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "all_variants")]
    pub variants: Vec<AblationVariant>,
    #[serde(default)]
    pub aggregation: Aggregation,
    /// Extra benchmark specs for the ablation table; `[benchmark]` is always the first column.
    #[serde(default)]
    pub ablation_specs: Vec<NamedSpec>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub gradcheck: GradcheckSpec,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Checks every section; all failures surface as [`Error::Config`].
    pub fn validate(&self) -> Result<()> {
        let cfg = |section: &str, e: Error| match e {
            Error::InvalidArgument(m) | Error::Config(m) => {
                Error::Config(format!("[{section}] {m}"))
            }
            other => other,
        };
        self.benchmark.validate().map_err(|e| cfg("benchmark", e))?;
        self.grpo.validate().map_err(|e| cfg("grpo", e))?;
        for s in &self.ablation_specs {
            s.spec
                .validate()
                .map_err(|e| cfg(&format!("ablation_specs.{}", s.name), e))?;
        }
        self.gradcheck.validate().map_err(|e| cfg("gradcheck", e))?;
        if self.variants.is_empty() {
            return Err(Error::Config("`variants` must not be empty".into()));
        }
        Ok(())
    }

    /// Seeds from the config, falling back to the benchmark seed.
    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.benchmark.seed]
        } else {
            self.seeds.clone()
        }
    }

    /// The ablation columns: `[benchmark]` as "default", then `ablation_specs`.
    pub fn named_specs(&self) -> Vec<NamedSpec> {
        std::iter::once(NamedSpec {
            name: "default".into(),
            spec: self.benchmark.clone(),
        })
        .chain(self.ablation_specs.iter().cloned())
        .collect()
    }

    /// SHA-256 of the canonical JSON form. Object keys are sorted, so the
    /// hash does not depend on field order in the source file.
    pub fn hash(&self) -> Result<String> {
        let value = serde_json::to_value(self).map_err(|e| Error::Serde(e.to_string()))?;
        let bytes = serde_json::to_vec(&value).map_err(|e| Error::Serde(e.to_string()))?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

/// Parses `1,2,5` and ranges like `1-20` (inclusive), mixed freely.
pub fn parse_seed_list(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse seed list `{s}`"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad())?;
                let b: u64 = b.trim().parse().map_err(|_| bad())?;
                if b < a {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}
