//! Test-time synthesis of pseudo-word embeddings for concepts a fixed text
//! vocabulary cannot name.
//!
//! Given a visual anchor for an unseen concept, [`grpo`] searches the token
//! embedding space for a continuous pseudo-word whose templated text embedding
//! aligns with the anchor, while a vocabulary regularizer keeps it near known
//! words. [`benchmark`] provides a synthetic seen/OOD benchmark with
//! constructible optima, zero- and few-shot evaluation, and an ablation runner;
//! [`experiment`] wraps everything behind config files and the `gtma` binary.
//!
//! Runnable walkthroughs live in `examples/`; see the README for the list.

pub mod benchmark;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod grpo;
pub mod numeric;
pub mod rng;

pub use encoder::{
    alignment_gradient, alignment_score, encode_text, global_context, raw_anchor, refine_anchor,
    AttentionParams, EncoderMode, PatchFeatures, Prompt, Template, TextEncoderParams, VisualAnchor,
    VocabularyTable,
};
pub use error::{Error, Result};
pub use grpo::{
    adaptive_step, grad_similarity, grpo_run, init_pseudo_word, objective_value, project_to_vocab,
    regularization_gradient, GrpoConfig, InitMode, ProjectionMode, PseudoWordEmbedding, StepRecord,
    Trajectory,
};
pub use numeric::{
    cosine_sim, finite_diff_gradient, l2_normalize, scaled_dot_attention, softmax, Mat64, Vec64,
};
