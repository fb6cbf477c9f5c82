//! Synthetic seen/OOD benchmark.
//!
//! Concepts are unit prototypes in the joint space. Seen concepts get a
//! vocabulary token solved so that the prompt "a photo of a <token>" encodes
//! exactly to the prototype direction; OOD concepts get no token. Each image
//! is a set of patch features scattered around its concept's prototype.

mod ablation;
mod eval;
mod generate;
pub mod stats;

use serde::{Deserialize, Serialize};

use crate::encoder::{
    raw_anchor, refine_anchor, AttentionParams, EncoderMode, PatchFeatures, Prompt, Template,
    TextEncoderParams, VisualAnchor, VocabularyTable,
};
use crate::error::{Error, Result};
use crate::numeric::Vec64;

pub use ablation::{
    few_shot_sweep, run_ablation, AblationRow, AblationTable, NamedSpec, OrderingViolation,
    SeedResult, ShotRow, VariantSummary,
};
pub use eval::{
    baseline_text_embeddings, evaluate, gtma_class_anchors, run_baseline, run_gtma, Aggregation,
    ClassCount, ClassSynthesis, EvalReport, Method,
};
pub use generate::generate_benchmark;

/// Allowed few-shot sizes.
pub const SHOT_SIZES: [usize; 5] = [1, 2, 4, 8, 16];

/// Prototypes are redrawn until every pairwise cosine is below this.
pub const MAX_PROTOTYPE_COSINE: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionInit {
    /// One seeded orthogonal map shared by queries and keys.
    RandomTied,
    Identity,
}

fn default_support() -> usize {
    10
}
fn default_token_scale() -> f64 {
    0.03
}
fn default_distractors() -> usize {
    20
}
fn default_attention() -> AttentionInit {
    AttentionInit::RandomTied
}
fn default_shots() -> Vec<usize> {
    SHOT_SIZES.to_vec()
}
fn default_mode() -> EncoderMode {
    EncoderMode::MeanPoolIdentity
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub num_seen: usize,
    pub num_ood: usize,
    pub images_per_class: usize,
    /// Leading images of each class that go to the support split; the rest are test images.
    #[serde(default = "default_support")]
    pub support_per_class: usize,
    pub patches_per_image: usize,
    /// Per-coordinate standard deviation of patch noise.
    pub noise_sigma: f64,
    pub d_e: usize,
    pub d_tok: usize,
    pub d_k: usize,
    #[serde(default = "default_mode")]
    pub encoder_mode: EncoderMode,
    #[serde(default = "default_shots")]
    pub shots: Vec<usize>,
    pub seed: u64,
    /// Norm of the pooled text vector behind every concept word. Sets how far
    /// a fixed step moves the pseudo-word in angle.
    #[serde(default = "default_token_scale")]
    pub token_scale: f64,
    #[serde(default = "default_distractors")]
    pub num_distractors: usize,
    #[serde(default = "default_attention")]
    pub attention: AttentionInit,
}

impl Default for BenchmarkSpec {
    /// 10 seen + 10 OOD classes, 20 images per class (10 support / 10 test),
    /// 16 patches, σ = 0.1, 64-dimensional spaces, seed 1.
    fn default() -> Self {
        BenchmarkSpec {
            num_seen: 10,
            num_ood: 10,
            images_per_class: 20,
            support_per_class: default_support(),
            patches_per_image: 16,
            noise_sigma: 0.1,
            d_e: 64,
            d_tok: 64,
            d_k: 64,
            encoder_mode: default_mode(),
            shots: default_shots(),
            seed: 1,
            token_scale: default_token_scale(),
            num_distractors: default_distractors(),
            attention: default_attention(),
        }
    }
}

impl BenchmarkSpec {
    pub fn with_seed(&self, seed: u64) -> Self {
        BenchmarkSpec {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        for (name, v) in [
            ("num_seen", self.num_seen),
            ("num_ood", self.num_ood),
            ("images_per_class", self.images_per_class),
            ("patches_per_image", self.patches_per_image),
            ("d_e", self.d_e),
            ("d_tok", self.d_tok),
            ("d_k", self.d_k),
            ("num_distractors", self.num_distractors),
        ] {
            if v == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if self.support_per_class > self.images_per_class {
            return bad(format!(
                "support_per_class {} exceeds images_per_class {}",
                self.support_per_class, self.images_per_class
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            ));
        }
        if !(self.token_scale > 0.0 && self.token_scale.is_finite()) {
            return bad(format!("token_scale must be > 0, got {}", self.token_scale));
        }
        if let Some(s) = self.shots.iter().find(|s| !SHOT_SIZES.contains(s)) {
            return bad(format!("shot size {s} not in {SHOT_SIZES:?}"));
        }
        if self.encoder_mode == EncoderMode::MeanPoolIdentity && self.d_e != self.d_tok {
            return bad("mean_pool_identity needs d_e == d_tok".into());
        }
        if self.d_e > self.d_tok {
            return bad(
                "d_e must not exceed d_tok (concept tokens are solved through the projection)"
                    .into(),
            );
        }
        if self.attention == AttentionInit::Identity && self.d_k != self.d_e {
            return bad("identity attention needs d_k == d_e".into());
        }
        Ok(())
    }

    pub fn num_concepts(&self) -> usize {
        self.num_seen + self.num_ood
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptKind {
    Seen { token_index: usize },
    Ood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptSpec {
    pub concept_id: usize,
    pub display_name: String,
    pub prototype: Vec64,
    pub kind: ConceptKind,
}

impl ConceptSpec {
    pub fn is_seen(&self) -> bool {
        matches!(self.kind, ConceptKind::Seen { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Support,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub true_concept: usize,
    pub split: Split,
    pub patches: PatchFeatures,
}

/// Everything one generated benchmark consists of; this is also the fixture
/// file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub spec: BenchmarkSpec,
    pub vocab: VocabularyTable,
    pub encoder: TextEncoderParams,
    pub attention: AttentionParams,
    pub template: Template,
    /// Vocabulary index of the first distractor word.
    pub placeholder_token: usize,
    pub concepts: Vec<ConceptSpec>,
    pub instances: Vec<Instance>,
}

impl Dataset {
    pub fn prompt(&self) -> Result<Prompt<'_>> {
        Prompt::new(&self.encoder, &self.vocab, &self.template)
    }

    pub fn anchor(&self, instance: &Instance, refined: bool) -> Result<VisualAnchor> {
        if refined {
            refine_anchor(&instance.patches, &self.attention)
        } else {
            raw_anchor(&instance.patches)
        }
    }

    pub fn instance(&self, id: &str) -> Result<&Instance> {
        self.instances
            .iter()
            .find(|i| i.id == id)
            .ok_or_else(|| Error::UnknownInstance(id.to_string()))
    }

    pub fn test_instances(&self) -> impl Iterator<Item = &Instance> {
        self.instances.iter().filter(|i| i.split == Split::Test)
    }

    /// Support instances of one concept, in generation order.
    pub fn support_of(&self, concept: usize) -> impl Iterator<Item = &Instance> {
        self.instances
            .iter()
            .filter(move |i| i.split == Split::Support && i.true_concept == concept)
    }

    pub fn ood_concepts(&self) -> impl Iterator<Item = &ConceptSpec> {
        self.concepts.iter().filter(|c| !c.is_seen())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Full,
    NoPseudoWordOpt,
    NoAnchorRefinement,
    NoAdaptiveLr,
    NoSemanticReg,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 5] = [
        AblationVariant::Full,
        AblationVariant::NoPseudoWordOpt,
        AblationVariant::NoAnchorRefinement,
        AblationVariant::NoAdaptiveLr,
        AblationVariant::NoSemanticReg,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::NoPseudoWordOpt => "no_pseudo_word_opt",
            AblationVariant::NoAnchorRefinement => "no_anchor_refinement",
            AblationVariant::NoAdaptiveLr => "no_adaptive_lr",
            AblationVariant::NoSemanticReg => "no_semantic_reg",
        }
    }

    pub fn uses_refined_anchor(self) -> bool {
        self != AblationVariant::NoAnchorRefinement
    }

    pub fn optimizes(self) -> bool {
        self != AblationVariant::NoPseudoWordOpt
    }

    /// The optimizer config this variant runs with.
    pub fn adjust(self, config: &crate::grpo::GrpoConfig) -> crate::grpo::GrpoConfig {
        let mut c = *config;
        match self {
            AblationVariant::NoAdaptiveLr => c.adaptive_lr = false,
            AblationVariant::NoSemanticReg => c.lambda = 0.0,
            _ => {}
        }
        c
    }
}

impl std::fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for AblationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationVariant::ALL
            .into_iter()
            .find(|v| v.tag() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant `{s}`")))
    }
}
