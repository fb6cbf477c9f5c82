use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{
    EncoderMode, MlpGains, Prompt, Template, TextEncoderParams, VisualAnchor, VocabularyTable,
};
use crate::error::{Error, Result};
use crate::numeric::{finite_diff_gradient, relative_error, Mat64, Vec64, DEFAULT_FD_STEP};
use crate::rng::{gaussian_mat, gaussian_vec, random_unit, seeded, SeededRng};

const GRADCHECK_STREAM: u64 = 0x6c;
const GRADCHECK_VOCAB: usize = 6;

fn default_trials() -> usize {
    200
}
fn default_dims() -> Vec<usize> {
    vec![4, 16, 64]
}
fn default_modes() -> Vec<EncoderMode> {
    EncoderMode::ALL.to_vec()
}
fn default_tolerance() -> f64 {
    1e-5
}
fn default_fd_step() -> f64 {
    DEFAULT_FD_STEP
}

/// Randomized comparison of the analytic alignment gradient against central
/// finite differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckSpec {
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Token dimensions; the joint dimension is half of it (at least 2) outside identity mode.
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_modes")]
    pub modes: Vec<EncoderMode>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
}

impl Default for GradcheckSpec {
    fn default() -> Self {
        GradcheckSpec {
            trials: default_trials(),
            dims: default_dims(),
            modes: default_modes(),
            tolerance: default_tolerance(),
            seed: 0,
            fd_step: default_fd_step(),
        }
    }
}

impl GradcheckSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.trials == 0 {
            return bad("trials must be >= 1");
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return bad("dims must be a non-empty list of positive sizes");
        }
        if self.modes.is_empty() {
            return bad("modes must not be empty");
        }
        if !(self.tolerance.is_finite()
            && self.tolerance > 0.0
            && self.fd_step.is_finite()
            && self.fd_step > 0.0)
        {
            return bad("tolerance and fd_step must be finite and > 0");
        }
        Ok(())
    }

    /// Seed, mode and token dimension of trial `i`. Modes cycle fastest, so
    /// any `modes.len() · dims.len()` consecutive trials cover every pair.
    pub fn trial_setup(&self, i: usize) -> (u64, EncoderMode, usize) {
        let mode = self.modes[i % self.modes.len()];
        let d = self.dims[(i / self.modes.len()) % self.dims.len()];
        (self.seed.wrapping_add(i as u64), mode, d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub mode: EncoderMode,
    pub d_tok: usize,
    pub d_e: usize,
    pub relative_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub max_relative_error: f64,
    pub passed: bool,
    pub trials: Vec<TrialResult>,
}

impl GradcheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &TrialResult> {
        self.trials.iter().filter(|t| !t.passed)
    }
}

fn random_problem(
    rng: &mut SeededRng,
    mode: EncoderMode,
    d_tok: usize,
) -> Result<(
    TextEncoderParams,
    VocabularyTable,
    Template,
    VisualAnchor,
    Vec64,
)> {
    let d_e = if mode == EncoderMode::MeanPoolIdentity {
        d_tok
    } else {
        (d_tok / 2).max(2).min(d_tok)
    };
    let encoder = TextEncoderParams::random(mode, d_tok, d_e, MlpGains::default(), rng)?;
    let rows: Mat64 = gaussian_mat(rng, GRADCHECK_VOCAB, d_tok, 1.0)?;
    let names = (0..GRADCHECK_VOCAB).map(|i| format!("w{i}")).collect();
    let vocab = VocabularyTable::new(rows, names)?;
    let context_len = rng.random_range(0..=4);
    let context: Vec<usize> = (0..context_len)
        .map(|_| rng.random_range(0..GRADCHECK_VOCAB))
        .collect();
    let slot = rng.random_range(0..=context_len);
    let template = Template::new(context, slot)?;
    let anchor = VisualAnchor::from_vector(&random_unit(rng, d_e)?)?;
    let z = Vec64::new(gaussian_vec(rng, d_tok, 1.0))?;
    Ok((encoder, vocab, template, anchor, z))
}

/// Runs every trial. `corrupt_trial` perturbs the analytic gradient of one
/// trial; it exists as a negative control for the harness itself.
pub fn run_gradcheck(
    spec: &GradcheckSpec,
    corrupt_trial: Option<usize>,
) -> Result<GradcheckReport> {
    spec.validate()?;
    let mut trials = Vec::with_capacity(spec.trials);
    for i in 0..spec.trials {
        let (seed, mode, d_tok) = spec.trial_setup(i);
        let mut rng = seeded(seed, GRADCHECK_STREAM);
        let (encoder, vocab, template, anchor, z) = random_problem(&mut rng, mode, d_tok)?;
        let prompt = Prompt::new(&encoder, &vocab, &template)?;
        let mut g = prompt.gradient(&anchor, &z)?;
        if corrupt_trial == Some(i) {
            let bump = 1e-3 * g.norm().max(1e-6);
            let mut v = g.into_inner();
            v[0] += bump;
            g = Vec64::new(v)?;
        }
        let fd = finite_diff_gradient(|p| prompt.score(&anchor, p), &z, spec.fd_step)?;
        let err = relative_error(&g, &fd, 1e-8)?;
        trials.push(TrialResult {
            trial: i,
            seed,
            mode,
            d_tok,
            d_e: anchor.dim(),
            relative_error: err,
            passed: err < spec.tolerance,
        });
    }
    let max_relative_error = trials.iter().map(|t| t.relative_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        tolerance: spec.tolerance,
        max_relative_error,
        passed: trials.iter().all(|t| t.passed),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_passes_and_is_reproducible() {
        let spec = GradcheckSpec {
            trials: 12,
            dims: vec![4, 16],
            ..GradcheckSpec::default()
        };
        let a = run_gradcheck(&spec, None).unwrap();
        assert!(a.passed, "max rel err {}", a.max_relative_error);
        assert_eq!(a, run_gradcheck(&spec, None).unwrap());
    }

    #[test]
    fn corrupted_trial_fails_with_its_seed() {
        let spec = GradcheckSpec {
            trials: 6,
            dims: vec![4],
            seed: 40,
            ..GradcheckSpec::default()
        };
        let r = run_gradcheck(&spec, Some(4)).unwrap();
        assert!(!r.passed);
        let failed: Vec<_> = r.failures().map(|t| t.seed).collect();
        assert_eq!(failed, vec![44]);
    }

    #[test]
    fn trial_layout_covers_all_pairs() {
        let spec = GradcheckSpec::default();
        let mut pairs: Vec<_> = (0..9)
            .map(|i| {
                let (_, m, d) = spec.trial_setup(i);
                (m, d)
            })
            .collect();
        pairs.sort_by_key(|&(m, d)| (m as u8, d));
        pairs.dedup();
        assert_eq!(pairs.len(), 9);
    }
}
