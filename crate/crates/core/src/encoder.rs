//! Toy joint-embedding model: a differentiable text encoder with one
//! pseudo-word slot, plus attention-based purification of visual anchors.
//!
//! The text encoder gathers template token embeddings, substitutes the
//! pseudo-word `z` into the slot, mean-pools over the sequence, maps the pooled
//! vector into the joint space and L2-normalizes:
//!
//! ```text
//! u = (Σ_ctx e_i + z) / L
//! h = W_t u                          (MeanPoolProjected; W_t = I for MeanPoolIdentity)
//! h = W_t u + W_o tanh(W_h u)        (OneHiddenMlp)
//! T(P(z)) = h / ‖h‖
//! ```

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numeric::{
    axpy, cosine_sim, dot, l2_normalize, norm, scaled_dot_attention, Mat64, Vec64, EPS_NORM,
};
use crate::rng::{random_orthogonal, SeededRng};

/// Known word embeddings `E(V)`, one row per token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct VocabularyTable {
    embeddings: Mat64,
    token_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    token_names: Vec<String>,
    embeddings: Mat64,
}

impl VocabularyTable {
    pub fn new(embeddings: Mat64, token_names: Vec<String>) -> Result<Self> {
        if embeddings.rows() < 2 {
            return Err(Error::InvalidArgument(
                "vocabulary needs at least two tokens".into(),
            ));
        }
        check_dim(embeddings.rows(), token_names.len())?;
        let mut seen = BTreeSet::new();
        for name in &token_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate token name `{name}`"
                )));
            }
        }
        Ok(VocabularyTable {
            embeddings,
            token_names,
        })
    }

    pub fn len(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Token embedding dimension `d_tok`.
    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn embeddings(&self) -> &Mat64 {
        &self.embeddings
    }

    pub fn embedding(&self, index: usize) -> &[f64] {
        self.embeddings.row(index)
    }

    pub fn token_name(&self, index: usize) -> &str {
        &self.token_names[index]
    }

    pub fn token_names(&self) -> &[String] {
        &self.token_names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.token_names.iter().position(|n| n == name)
    }
}

impl TryFrom<VocabularyRepr> for VocabularyTable {
    type Error = Error;

    fn try_from(r: VocabularyRepr) -> Result<Self> {
        VocabularyTable::new(r.embeddings, r.token_names)
    }
}

impl From<VocabularyTable> for VocabularyRepr {
    fn from(v: VocabularyTable) -> Self {
        VocabularyRepr {
            token_names: v.token_names,
            embeddings: v.embeddings,
        }
    }
}

/// A prompt template with exactly one pseudo-word slot.
///
/// Serialized as the context word ids in order plus the position of the slot
/// in the full sequence, so `{"token_ids": [0, 1, 2, 0], "slot_position": 4}`
/// reads "a photo of a [z]" when ids 0..3 are `a`, `photo`, `of`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TemplateRepr", into = "TemplateRepr")]
pub struct Template {
    context: Vec<usize>,
    slot_position: usize,
}

#[derive(Serialize, Deserialize)]
struct TemplateRepr {
    token_ids: Vec<usize>,
    slot_position: usize,
}

impl Template {
    pub fn new(context: Vec<usize>, slot_position: usize) -> Result<Self> {
        if slot_position > context.len() {
            return Err(Error::InvalidArgument(format!(
                "slot position {slot_position} beyond template of length {}",
                context.len() + 1
            )));
        }
        Ok(Template {
            context,
            slot_position,
        })
    }

    /// The template consisting of the slot alone.
    pub fn slot_only() -> Self {
        Template {
            context: Vec::new(),
            slot_position: 0,
        }
    }

    /// Sequence length including the slot.
    pub fn len(&self) -> usize {
        self.context.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn slot_position(&self) -> usize {
        self.slot_position
    }

    pub fn context_ids(&self) -> &[usize] {
        &self.context
    }

    pub fn validate(&self, vocab: &VocabularyTable) -> Result<()> {
        match self.context.iter().find(|&&id| id >= vocab.len()) {
            Some(id) => Err(Error::InvalidArgument(format!(
                "template token id {id} out of range for vocabulary of {}",
                vocab.len()
            ))),
            None => Ok(()),
        }
    }

    /// Sum of the context token embeddings.
    pub fn context_sum(&self, vocab: &VocabularyTable) -> Result<Vec<f64>> {
        self.validate(vocab)?;
        let mut acc = vec![0.0; vocab.dim()];
        for &id in &self.context {
            axpy(1.0, vocab.embedding(id), &mut acc);
        }
        Ok(acc)
    }

    /// Mean-pooled sequence embedding with `z` in the slot.
    pub fn pooled(&self, vocab: &VocabularyTable, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(vocab.dim(), z.len())?;
        let mut acc = self.context_sum(vocab)?;
        axpy(1.0, z, &mut acc);
        let inv = 1.0 / self.len() as f64;
        acc.iter_mut().for_each(|x| *x *= inv);
        Ok(acc)
    }

    /// Slot value that makes the pooled embedding equal `pooled`.
    pub fn solve_slot(&self, vocab: &VocabularyTable, pooled: &[f64]) -> Result<Vec<f64>> {
        check_dim(vocab.dim(), pooled.len())?;
        let ctx = self.context_sum(vocab)?;
        let l = self.len() as f64;
        Ok(pooled.iter().zip(&ctx).map(|(p, c)| l * p - c).collect())
    }
}

impl TryFrom<TemplateRepr> for Template {
    type Error = Error;

    fn try_from(r: TemplateRepr) -> Result<Self> {
        Template::new(r.token_ids, r.slot_position)
    }
}

impl From<Template> for TemplateRepr {
    fn from(t: Template) -> Self {
        TemplateRepr {
            token_ids: t.context,
            slot_position: t.slot_position,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderMode {
    MeanPoolIdentity,
    MeanPoolProjected,
    OneHiddenMlp,
}

impl EncoderMode {
    pub const ALL: [EncoderMode; 3] = [
        EncoderMode::MeanPoolIdentity,
        EncoderMode::MeanPoolProjected,
        EncoderMode::OneHiddenMlp,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            EncoderMode::MeanPoolIdentity => "mean_pool_identity",
            EncoderMode::MeanPoolProjected => "mean_pool_projected",
            EncoderMode::OneHiddenMlp => "one_hidden_mlp",
        }
    }
}

impl std::str::FromStr for EncoderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_pool_identity" | "identity" => Ok(EncoderMode::MeanPoolIdentity),
            "mean_pool_projected" | "projected" => Ok(EncoderMode::MeanPoolProjected),
            "one_hidden_mlp" | "mlp" => Ok(EncoderMode::OneHiddenMlp),
            other => Err(Error::InvalidArgument(format!(
                "unknown encoder mode `{other}`"
            ))),
        }
    }
}

/// Residual branch of the `OneHiddenMlp` mode: `W_o tanh(W_h u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpWeights {
    /// `W_h`, shape `d_hidden × d_tok`.
    pub hidden: Mat64,
    /// `W_o`, shape `d_e × d_hidden`.
    pub output: Mat64,
}

/// Gains for randomly initialized MLP weights. Their product bounds the
/// Lipschitz constant of the residual branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpGains {
    pub hidden: f64,
    pub output: f64,
}

impl Default for MlpGains {
    fn default() -> Self {
        MlpGains {
            hidden: 2.0,
            output: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TextEncoderRepr", into = "TextEncoderRepr")]
pub struct TextEncoderParams {
    mode: EncoderMode,
    projection: Mat64,
    mlp: Option<MlpWeights>,
}

#[derive(Serialize, Deserialize)]
struct TextEncoderRepr {
    mode: EncoderMode,
    projection: Mat64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mlp: Option<MlpWeights>,
}

impl TextEncoderParams {
    pub fn new(mode: EncoderMode, projection: Mat64, mlp: Option<MlpWeights>) -> Result<Self> {
        match mode {
            EncoderMode::MeanPoolIdentity => {
                if projection != Mat64::identity(projection.cols())? {
                    return Err(Error::InvalidArgument(
                        "MeanPoolIdentity requires an identity projection".into(),
                    ));
                }
                if mlp.is_some() {
                    return Err(Error::InvalidArgument(
                        "MeanPoolIdentity takes no MLP weights".into(),
                    ));
                }
            }
            EncoderMode::MeanPoolProjected => {
                if mlp.is_some() {
                    return Err(Error::InvalidArgument(
                        "MeanPoolProjected takes no MLP weights".into(),
                    ));
                }
            }
            EncoderMode::OneHiddenMlp => {
                let w = mlp.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("OneHiddenMlp requires MLP weights".into())
                })?;
                check_dim(projection.cols(), w.hidden.cols())?;
                check_dim(w.hidden.rows(), w.output.cols())?;
                check_dim(projection.rows(), w.output.rows())?;
            }
        }
        Ok(TextEncoderParams {
            mode,
            projection,
            mlp,
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(EncoderMode::MeanPoolIdentity, Mat64::identity(dim)?, None)
    }

    /// Seeded random parameters for `mode`. Projections have orthonormal rows
    /// when `d_e <= d_tok` so the pooled vector can be solved for exactly.
    pub fn random(
        mode: EncoderMode,
        d_tok: usize,
        d_e: usize,
        gains: MlpGains,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        match mode {
            EncoderMode::MeanPoolIdentity => {
                check_dim(d_tok, d_e)?;
                Self::identity(d_tok)
            }
            EncoderMode::MeanPoolProjected => {
                Self::new(mode, random_orthogonal(rng, d_e, d_tok)?, None)
            }
            EncoderMode::OneHiddenMlp => {
                let projection = random_orthogonal(rng, d_e, d_tok)?;
                let hidden = random_orthogonal(rng, d_tok, d_tok)?.scaled(gains.hidden);
                let output = random_orthogonal(rng, d_e, d_tok)?.scaled(gains.output);
                Self::new(mode, projection, Some(MlpWeights { hidden, output }))
            }
        }
    }

    pub fn mode(&self) -> EncoderMode {
        self.mode
    }

    pub fn projection(&self) -> &Mat64 {
        &self.projection
    }

    pub fn mlp(&self) -> Option<&MlpWeights> {
        self.mlp.as_ref()
    }

    /// `d_tok`
    pub fn token_dim(&self) -> usize {
        self.projection.cols()
    }

    /// `d_e`
    pub fn joint_dim(&self) -> usize {
        self.projection.rows()
    }

    /// Pooled token-space vector to unnormalized joint-space vector.
    pub fn forward(&self, pooled: &[f64]) -> Result<Vec<f64>> {
        match self.mode {
            EncoderMode::MeanPoolIdentity => {
                check_dim(self.token_dim(), pooled.len())?;
                Ok(pooled.to_vec())
            }
            EncoderMode::MeanPoolProjected => self.projection.matvec(pooled),
            EncoderMode::OneHiddenMlp => {
                let w = self.mlp.as_ref().expect("validated on construction");
                let mut h = self.projection.matvec(pooled)?;
                let a: Vec<f64> = w
                    .hidden
                    .matvec(pooled)?
                    .into_iter()
                    .map(f64::tanh)
                    .collect();
                axpy(1.0, &w.output.matvec(&a)?, &mut h);
                Ok(h)
            }
        }
    }

    /// Vector-Jacobian product `J(pooled)ᵀ · upstream`.
    pub fn backward(&self, pooled: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        match self.mode {
            EncoderMode::MeanPoolIdentity => {
                check_dim(self.joint_dim(), upstream.len())?;
                Ok(upstream.to_vec())
            }
            EncoderMode::MeanPoolProjected => self.projection.matvec_t(upstream),
            EncoderMode::OneHiddenMlp => {
                let w = self.mlp.as_ref().expect("validated on construction");
                let mut grad = self.projection.matvec_t(upstream)?;
                let pre = w.hidden.matvec(pooled)?;
                let back = w.output.matvec_t(upstream)?;
                let gated: Vec<f64> = pre
                    .iter()
                    .zip(&back)
                    .map(|(p, b)| {
                        let t = p.tanh();
                        (1.0 - t * t) * b
                    })
                    .collect();
                axpy(1.0, &w.hidden.matvec_t(&gated)?, &mut grad);
                Ok(grad)
            }
        }
    }

    /// Finds a pooled vector `u` with `forward(u) = target`.
    ///
    /// Exact for the identity mode; the projected and MLP modes need a
    /// projection with orthonormal rows, and the MLP branch is solved by
    /// fixed-point iteration (a contraction when `‖W_o‖‖W_h‖ < 1`).
    pub fn solve_pooled(&self, target: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.joint_dim(), target.len())?;
        let u = match self.mode {
            EncoderMode::MeanPoolIdentity => target.to_vec(),
            EncoderMode::MeanPoolProjected => self.projection.matvec_t(target)?,
            EncoderMode::OneHiddenMlp => {
                let w = self.mlp.as_ref().expect("validated on construction");
                let mut u = self.projection.matvec_t(target)?;
                for _ in 0..500 {
                    let a: Vec<f64> = w.hidden.matvec(&u)?.into_iter().map(f64::tanh).collect();
                    let mut rhs = target.to_vec();
                    axpy(-1.0, &w.output.matvec(&a)?, &mut rhs);
                    let next = self.projection.matvec_t(&rhs)?;
                    let moved = next
                        .iter()
                        .zip(&u)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    u = next;
                    if moved < 1e-15 {
                        break;
                    }
                }
                u
            }
        };
        let residual: Vec<f64> = self
            .forward(&u)?
            .iter()
            .zip(target)
            .map(|(a, b)| a - b)
            .collect();
        if norm(&residual) > 1e-9 * norm(target).max(1.0) {
            return Err(Error::GenerationFailure(
                "text encoder cannot reproduce the requested joint-space vector".into(),
            ));
        }
        Ok(u)
    }
}

impl TryFrom<TextEncoderRepr> for TextEncoderParams {
    type Error = Error;

    fn try_from(r: TextEncoderRepr) -> Result<Self> {
        TextEncoderParams::new(r.mode, r.projection, r.mlp)
    }
}

impl From<TextEncoderParams> for TextEncoderRepr {
    fn from(p: TextEncoderParams) -> Self {
        TextEncoderRepr {
            mode: p.mode,
            projection: p.projection,
            mlp: p.mlp,
        }
    }
}

/// Unit-norm joint-space embedding of an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualAnchor {
    c_v: Vec64,
    purified: bool,
}

impl VisualAnchor {
    /// Normalizes `v` into an unpurified anchor.
    pub fn from_vector(v: &Vec64) -> Result<Self> {
        Ok(VisualAnchor {
            c_v: l2_normalize(v)?,
            purified: false,
        })
    }

    pub fn vector(&self) -> &Vec64 {
        &self.c_v
    }

    pub fn dim(&self) -> usize {
        self.c_v.dim()
    }

    pub fn is_purified(&self) -> bool {
        self.purified
    }
}

/// The text side of the model bound together: encoder, vocabulary, template.
#[derive(Debug, Clone, Copy)]
pub struct Prompt<'a> {
    pub encoder: &'a TextEncoderParams,
    pub vocab: &'a VocabularyTable,
    pub template: &'a Template,
}

struct Forward {
    pooled: Vec<f64>,
    joint: Vec<f64>,
    joint_norm: f64,
}

impl<'a> Prompt<'a> {
    pub fn new(
        encoder: &'a TextEncoderParams,
        vocab: &'a VocabularyTable,
        template: &'a Template,
    ) -> Result<Self> {
        check_dim(encoder.token_dim(), vocab.dim())?;
        template.validate(vocab)?;
        Ok(Prompt {
            encoder,
            vocab,
            template,
        })
    }

    fn run(&self, z: &Vec64) -> Result<Forward> {
        let pooled = self.template.pooled(self.vocab, z.as_slice())?;
        let joint = self.encoder.forward(&pooled)?;
        let joint_norm = norm(&joint);
        if joint_norm <= EPS_NORM {
            return Err(Error::ZeroVector { norm: joint_norm });
        }
        Ok(Forward {
            pooled,
            joint,
            joint_norm,
        })
    }

    pub fn encode(&self, z: &Vec64) -> Result<Vec64> {
        let f = self.run(z)?;
        Ok(Vec64::from_computed(
            f.joint.iter().map(|x| x / f.joint_norm).collect(),
        ))
    }

    pub fn score(&self, anchor: &VisualAnchor, z: &Vec64) -> Result<f64> {
        check_dim(self.encoder.joint_dim(), anchor.dim())?;
        cosine_sim(anchor.vector(), &self.encode(z)?)
    }

    /// Score and its closed-form gradient with respect to `z`.
    pub fn score_and_gradient(&self, anchor: &VisualAnchor, z: &Vec64) -> Result<(f64, Vec64)> {
        check_dim(self.encoder.joint_dim(), anchor.dim())?;
        let f = self.run(z)?;
        let c = anchor.vector().as_slice();
        let c_norm = norm(c);
        if c_norm <= EPS_NORM {
            return Err(Error::ZeroVector { norm: c_norm });
        }
        let score = dot(c, &f.joint) / (c_norm * f.joint_norm);
        // dS/dh = (c/‖c‖ − S·h/‖h‖) / ‖h‖
        let d_joint: Vec<f64> = c
            .iter()
            .zip(&f.joint)
            .map(|(ci, hi)| (ci / c_norm - score * hi / f.joint_norm) / f.joint_norm)
            .collect();
        let d_pooled = self.encoder.backward(&f.pooled, &d_joint)?;
        let inv_len = 1.0 / self.template.len() as f64;
        let grad = Vec64::from_computed(d_pooled.into_iter().map(|x| x * inv_len).collect());
        Ok((score.clamp(-1.0, 1.0), grad))
    }

    pub fn gradient(&self, anchor: &VisualAnchor, z: &Vec64) -> Result<Vec64> {
        Ok(self.score_and_gradient(anchor, z)?.1)
    }
}

/// `T(P(z))`: unit-norm joint embedding of the template with `z` in its slot.
pub fn encode_text(
    params: &TextEncoderParams,
    vocab: &VocabularyTable,
    template: &Template,
    z: &Vec64,
) -> Result<Vec64> {
    Prompt::new(params, vocab, template)?.encode(z)
}

/// `S = sim(c_v, T(P(z)))`.
pub fn alignment_score(
    anchor: &VisualAnchor,
    params: &TextEncoderParams,
    vocab: &VocabularyTable,
    template: &Template,
    z: &Vec64,
) -> Result<f64> {
    Prompt::new(params, vocab, template)?.score(anchor, z)
}

/// `∇_z S`, by the chain rule through pooling, encoder, normalization and cosine.
pub fn alignment_gradient(
    anchor: &VisualAnchor,
    params: &TextEncoderParams,
    vocab: &VocabularyTable,
    template: &Template,
    z: &Vec64,
) -> Result<Vec64> {
    Prompt::new(params, vocab, template)?.gradient(anchor, z)
}

/// Patch feature matrix `F`, one joint-space row per patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PatchFeatures(Mat64);

impl PatchFeatures {
    pub fn new(features: Mat64) -> Self {
        PatchFeatures(features)
    }

    pub fn matrix(&self) -> &Mat64 {
        &self.0
    }

    pub fn num_patches(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }
}

/// Query/key maps of the purification attention, each `d_k × d_e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AttentionRepr", into = "AttentionRepr")]
pub struct AttentionParams {
    w_q: Mat64,
    w_k: Mat64,
}

#[derive(Serialize, Deserialize)]
struct AttentionRepr {
    w_q: Mat64,
    w_k: Mat64,
}

impl AttentionParams {
    pub fn new(w_q: Mat64, w_k: Mat64) -> Result<Self> {
        check_dim(w_q.rows(), w_k.rows())?;
        check_dim(w_q.cols(), w_k.cols())?;
        Ok(AttentionParams { w_q, w_k })
    }

    pub fn identity(d_e: usize) -> Result<Self> {
        let eye = Mat64::identity(d_e)?;
        Self::new(eye.clone(), eye)
    }

    /// Frozen random orthogonal maps with `W_k = W_q`, so scores measure
    /// agreement between the global context and each patch.
    pub fn random_tied(d_k: usize, d_e: usize, rng: &mut SeededRng) -> Result<Self> {
        let w = random_orthogonal(rng, d_k, d_e)?;
        Self::new(w.clone(), w)
    }

    pub fn key_dim(&self) -> usize {
        self.w_q.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_q.cols()
    }

    pub fn w_q(&self) -> &Mat64 {
        &self.w_q
    }

    pub fn w_k(&self) -> &Mat64 {
        &self.w_k
    }
}

impl TryFrom<AttentionRepr> for AttentionParams {
    type Error = Error;

    fn try_from(r: AttentionRepr) -> Result<Self> {
        AttentionParams::new(r.w_q, r.w_k)
    }
}

impl From<AttentionParams> for AttentionRepr {
    fn from(a: AttentionParams) -> Self {
        AttentionRepr {
            w_q: a.w_q,
            w_k: a.w_k,
        }
    }
}

/// Global context `f̄`: the unweighted mean of the patch rows.
pub fn global_context(patches: &PatchFeatures) -> Vec64 {
    let m = patches.matrix();
    let weights = vec![1.0 / m.rows() as f64; m.rows()];
    Vec64::from_computed(m.matvec_t(&weights).expect("weights match row count"))
}

/// Attention weights `α = softmax((W_q f̄)(W_k F)ᵀ / √d_k)` over the patches.
pub fn purification_weights(patches: &PatchFeatures, attn: &AttentionParams) -> Result<Vec64> {
    check_dim(attn.input_dim(), patches.dim())?;
    let query = Vec64::from_computed(attn.w_q.matvec(global_context(patches).as_slice())?);
    let keys = patches.matrix().matmul(&attn.w_k.transpose())?;
    crate::numeric::attention_weights(&query, &keys)
}

/// Purified anchor `normalize(Σ α_i f_i)`.
pub fn refine_anchor(patches: &PatchFeatures, attn: &AttentionParams) -> Result<VisualAnchor> {
    check_dim(attn.input_dim(), patches.dim())?;
    let f = patches.matrix();
    let query = Vec64::from_computed(attn.w_q.matvec(global_context(patches).as_slice())?);
    let keys = f.matmul(&attn.w_k.transpose())?;
    let pooled = scaled_dot_attention(&query, &keys, f)?;
    Ok(VisualAnchor {
        c_v: l2_normalize(&pooled)?,
        purified: true,
    })
}

/// Anchor without purification: `normalize(f̄)`.
pub fn raw_anchor(patches: &PatchFeatures) -> Result<VisualAnchor> {
    VisualAnchor::from_vector(&global_context(patches))
}
