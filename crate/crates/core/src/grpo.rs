//! Pseudo-word optimization by regularized gradient ascent with a
//! gradient-agreement step size.
//!
//! Each step scores the current pseudo-word against the visual anchor, takes
//! the analytic gradient `g_t`, pulls toward the vocabulary with
//! `∇R = z − Proj(z)`, and moves by
//!
//! ```text
//! z_{t+1} = z_t + η_t (g_t − λ ∇R(z_t)),   η_t = η₀ σ(β (ρ_t − γ))
//! ```
//!
//! where `ρ_t` is the cosine between consecutive gradients (0 at `t = 0`).

use serde::{Deserialize, Serialize};

use crate::encoder::{Prompt, Template, TextEncoderParams, VisualAnchor, VocabularyTable};
use crate::error::{check_dim, Error, Result};
use crate::numeric::{cosine_sim, dot, norm, softmax_slice, Mat64, Vec64, EPS_NORM};
use crate::rng::{random_orthogonal, seeded};

/// Iterates whose norm exceeds this are treated as divergent.
pub const DIVERGENCE_NORM: f64 = 1e6;

const INIT_STREAM: u64 = 0x1417;

/// Continuous embedding occupying the template's slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PseudoWordEmbedding(Vec64);

impl PseudoWordEmbedding {
    pub fn new(z: Vec64) -> Self {
        PseudoWordEmbedding(z)
    }

    pub fn vector(&self) -> &Vec64 {
        &self.0
    }

    pub fn into_vector(self) -> Vec64 {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// Nearest vocabulary row in Euclidean distance; ties go to the lowest index.
    HardNearest,
    /// `softmax(−dist²/temperature)`-weighted mean of the `k` nearest rows.
    SoftKnn { k: usize, temperature: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Frozen seeded one-layer tanh network applied to the anchor.
    MlpInit { seed: u64 },
    /// Vocabulary row whose slot-only encoding best matches the anchor.
    NearestVocab,
    /// Seeded random orthogonal map applied to the anchor.
    LinearMap { seed: u64 },
}

fn default_projection() -> ProjectionMode {
    ProjectionMode::HardNearest
}

fn default_init() -> InitMode {
    InitMode::NearestVocab
}

fn default_true() -> bool {
    true
}

/// Optimizer hyperparameters. `eta0`, `lambda`, `beta`, `gamma` and
/// `iterations` have no serde defaults and must be spelled out in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrpoConfig {
    pub eta0: f64,
    pub lambda: f64,
    pub beta: f64,
    pub gamma: f64,
    pub iterations: usize,
    #[serde(default = "default_projection")]
    pub projection: ProjectionMode,
    #[serde(default = "default_init")]
    pub init: InitMode,
    /// When false every step uses `eta0` unmodulated.
    #[serde(default = "default_true")]
    pub adaptive_lr: bool,
}

impl Default for GrpoConfig {
    /// T = 10, η₀ = 0.01, λ = 0.1 with β = 10, γ = 0.5, hard projection and
    /// nearest-vocabulary initialization.
    fn default() -> Self {
        GrpoConfig {
            eta0: 0.01,
            lambda: 0.1,
            beta: 10.0,
            gamma: 0.5,
            iterations: 10,
            projection: ProjectionMode::HardNearest,
            init: InitMode::NearestVocab,
            adaptive_lr: true,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return bad(format!("eta0 must be > 0, got {}", self.eta0));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be > 0, got {}", self.beta));
        }
        if !(-1.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [-1, 1], got {}", self.gamma));
        }
        if let ProjectionMode::SoftKnn { k, temperature } = self.projection {
            if k == 0 {
                return bad("soft_knn k must be >= 1".into());
            }
            if !(temperature > 0.0 && temperature.is_finite()) {
                return bad(format!(
                    "soft_knn temperature must be > 0, got {temperature}"
                ));
            }
        }
        Ok(())
    }

    pub fn validate_for(&self, vocab: &VocabularyTable) -> Result<()> {
        self.validate()?;
        if let ProjectionMode::SoftKnn { k, .. } = self.projection {
            if k > vocab.len() {
                return Err(Error::InvalidArgument(format!(
                    "soft_knn k = {k} exceeds vocabulary size {}",
                    vocab.len()
                )));
            }
        }
        Ok(())
    }
}

/// One iteration of the optimizer, recorded before the update is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub score: f64,
    pub grad_norm: f64,
    pub rho: f64,
    pub eta: f64,
    pub reg_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub z_init: PseudoWordEmbedding,
    pub z_star: PseudoWordEmbedding,
    pub steps: Vec<StepRecord>,
    /// Alignment score at `z_star`.
    pub final_score: f64,
}

fn squared_distances(z: &[f64], vocab: &VocabularyTable) -> Vec<f64> {
    vocab
        .embeddings()
        .iter_rows()
        .map(|row| row.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect()
}

/// Index of the nearest vocabulary row; ties resolve to the lowest index.
pub fn nearest_row(z: &Vec64, vocab: &VocabularyTable) -> Result<usize> {
    check_dim(vocab.dim(), z.dim())?;
    let d = squared_distances(z.as_slice(), vocab);
    let mut best = 0;
    for (i, &di) in d.iter().enumerate().skip(1) {
        if di < d[best] {
            best = i;
        }
    }
    Ok(best)
}

/// `Proj_{E(V)}(z)` under the chosen projection.
pub fn project_to_vocab(z: &Vec64, vocab: &VocabularyTable, mode: ProjectionMode) -> Result<Vec64> {
    check_dim(vocab.dim(), z.dim())?;
    match mode {
        ProjectionMode::HardNearest => Ok(vocab.embeddings().row_vec(nearest_row(z, vocab)?)),
        ProjectionMode::SoftKnn { k, temperature } => {
            if k == 0 || k > vocab.len() || !(temperature.is_finite() && temperature > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "soft_knn needs 1 <= k <= {} and temperature > 0",
                    vocab.len()
                )));
            }
            let d = squared_distances(z.as_slice(), vocab);
            let mut order: Vec<usize> = (0..vocab.len()).collect();
            order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
            order.truncate(k);
            let logits: Vec<f64> = order.iter().map(|&i| -d[i] / temperature).collect();
            let weights = softmax_slice(&logits);
            let mut out = vec![0.0; vocab.dim()];
            for (&i, w) in order.iter().zip(weights) {
                crate::numeric::axpy(w, vocab.embedding(i), &mut out);
            }
            Ok(Vec64::from_computed(out))
        }
    }
}

/// `∇R(z) = z − Proj(z)`, holding the projection fixed.
pub fn regularization_gradient(
    z: &Vec64,
    vocab: &VocabularyTable,
    mode: ProjectionMode,
) -> Result<Vec64> {
    z.sub(&project_to_vocab(z, vocab, mode)?)
}

/// `R(z) = ½‖z − Proj(z)‖²`.
pub fn regularizer_value(z: &Vec64, vocab: &VocabularyTable, mode: ProjectionMode) -> Result<f64> {
    let r = regularization_gradient(z, vocab, mode)?;
    Ok(0.5 * dot(r.as_slice(), r.as_slice()))
}

/// Cosine between consecutive gradients, or 0 when either is (numerically) zero.
pub fn grad_similarity(g: &Vec64, g_prev: &Vec64) -> Result<f64> {
    check_dim(g.dim(), g_prev.dim())?;
    if g.norm() <= EPS_NORM || g_prev.norm() <= EPS_NORM {
        return Ok(0.0);
    }
    cosine_sim(g, g_prev)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `η = η₀ σ(β(ρ − γ))`, kept strictly inside `(0, η₀)` where the sigmoid
/// saturates in floating point.
pub fn adaptive_step(rho: f64, config: &GrpoConfig) -> f64 {
    let eta = config.eta0 * sigmoid(config.beta * (rho - config.gamma));
    if eta >= config.eta0 {
        config.eta0.next_down()
    } else if eta <= 0.0 {
        f64::MIN_POSITIVE.min(config.eta0.next_down())
    } else {
        eta
    }
}

/// Initial pseudo-word `z₀` for the given anchor.
pub fn init_pseudo_word(
    anchor: &VisualAnchor,
    vocab: &VocabularyTable,
    encoder: &TextEncoderParams,
    mode: InitMode,
) -> Result<PseudoWordEmbedding> {
    check_dim(encoder.joint_dim(), anchor.dim())?;
    check_dim(encoder.token_dim(), vocab.dim())?;
    let c = anchor.vector().as_slice();
    match mode {
        InitMode::NearestVocab => {
            let slot = Template::slot_only();
            let prompt = Prompt::new(encoder, vocab, &slot)?;
            let mut best: Option<(usize, f64)> = None;
            for i in 0..vocab.len() {
                let e = vocab.embeddings().row_vec(i);
                let Ok(s) = prompt.score(anchor, &e) else {
                    continue;
                };
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((i, s));
                }
            }
            let (i, _) = best.ok_or(Error::ZeroVector { norm: 0.0 })?;
            Ok(PseudoWordEmbedding(vocab.embeddings().row_vec(i)))
        }
        InitMode::LinearMap { seed } => {
            let map = random_orthogonal(&mut seeded(seed, INIT_STREAM), vocab.dim(), anchor.dim())?;
            init_linear(anchor, &map)
        }
        InitMode::MlpInit { seed } => {
            let d_tok = vocab.dim();
            let w = random_orthogonal(&mut seeded(seed, INIT_STREAM + 1), d_tok, anchor.dim())?
                .scaled((d_tok as f64).sqrt());
            let hidden: Vec<f64> = w.matvec(c)?.into_iter().map(f64::tanh).collect();
            let h_norm = norm(&hidden);
            if h_norm <= EPS_NORM {
                return Err(Error::ZeroVector { norm: h_norm });
            }
            // rescale to the typical vocabulary row norm
            let target = vocab.embeddings().iter_rows().map(norm).sum::<f64>() / vocab.len() as f64;
            Ok(PseudoWordEmbedding(Vec64::new(
                hidden.into_iter().map(|x| x * target / h_norm).collect(),
            )?))
        }
    }
}

/// `z₀ = map · c_v` for an explicit `d_tok × d_e` map.
pub fn init_linear(anchor: &VisualAnchor, map: &Mat64) -> Result<PseudoWordEmbedding> {
    Ok(PseudoWordEmbedding(Vec64::new(
        map.matvec(anchor.vector().as_slice())?,
    )?))
}

/// Runs the optimizer from the configured initialization.
pub fn grpo_run(
    anchor: &VisualAnchor,
    encoder: &TextEncoderParams,
    vocab: &VocabularyTable,
    template: &Template,
    config: &GrpoConfig,
) -> Result<Trajectory> {
    config.validate_for(vocab)?;
    let prompt = Prompt::new(encoder, vocab, template)?;
    let z0 = init_pseudo_word(anchor, vocab, encoder, config.init)?;
    optimize_from(anchor, &prompt, config, z0)
}

/// Runs the optimizer from an explicit starting point.
pub fn optimize_from(
    anchor: &VisualAnchor,
    prompt: &Prompt<'_>,
    config: &GrpoConfig,
    z0: PseudoWordEmbedding,
) -> Result<Trajectory> {
    config.validate_for(prompt.vocab)?;
    check_dim(prompt.vocab.dim(), z0.dim())?;
    let dim = z0.dim();
    let mut z = z0.vector().as_slice().to_vec();
    let mut g_prev = Vec64::zeros(dim)?;
    let mut steps = Vec::with_capacity(config.iterations);

    for t in 0..config.iterations {
        let zt = Vec64::from_computed(z.clone());
        let (score, g) = prompt.score_and_gradient(anchor, &zt)?;
        let reg = regularization_gradient(&zt, prompt.vocab, config.projection)?;
        let rho = grad_similarity(&g, &g_prev)?;
        let eta = if config.adaptive_lr {
            adaptive_step(rho, config)
        } else {
            config.eta0
        };

        for ((zi, gi), ri) in z.iter_mut().zip(g.as_slice()).zip(reg.as_slice()) {
            *zi += eta * (gi - config.lambda * ri);
        }
        if z.iter().any(|x| !x.is_finite()) || norm(&z) > DIVERGENCE_NORM {
            return Err(Error::NonFinite {
                context: "pseudo-word iterate".into(),
                step: Some(t),
            });
        }

        steps.push(StepRecord {
            t,
            score,
            grad_norm: g.norm(),
            rho,
            eta,
            reg_norm: reg.norm(),
        });
        g_prev = g;
    }

    let z_star = Vec64::from_computed(z);
    let final_score = prompt.score(anchor, &z_star)?;
    Ok(Trajectory {
        z_init: z0,
        z_star: PseudoWordEmbedding(z_star),
        steps,
        final_score,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub score: f64,
    pub regularizer: f64,
    /// `score − λ·regularizer`
    pub combined: f64,
}

pub fn objective_value(
    z: &PseudoWordEmbedding,
    anchor: &VisualAnchor,
    encoder: &TextEncoderParams,
    vocab: &VocabularyTable,
    template: &Template,
    config: &GrpoConfig,
) -> Result<Objective> {
    let prompt = Prompt::new(encoder, vocab, template)?;
    let score = prompt.score(anchor, z.vector())?;
    let regularizer = regularizer_value(z.vector(), vocab, config.projection)?;
    Ok(Objective {
        score,
        regularizer,
        combined: score - config.lambda * regularizer,
    })
}
