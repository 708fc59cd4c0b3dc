//! Hierarchical GRU emotion recognizers for dialogue.
//!
//! A lower-level bidirectional GRU reads the words of each utterance, an
//! upper-level bidirectional GRU reads the pooled utterance vectors of a
//! dialogue, and a small feed-forward head labels every utterance. Three
//! variants differ only in what the fusion layers see: the hidden states
//! alone ([`Variant::Plain`]), plus the individual embedding
//! ([`Variant::Fused`]), or plus directional self-attention contexts
//! ([`Variant::SelfAttnFused`]).
//!
//! All numeric code is generic over [`Scalar`]; the aliases below fix it to
//! `f64`, which is what training and the gradient checks use.

pub mod data;
pub mod encoder;
pub mod error;
pub mod fsutil;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use data::{
    compute_class_weights, load_corpus_jsonl, load_embeddings, preprocess, Corpus, Dialogue,
    EmbeddingMatrix, LabelScheme, RawDialogue, Split, Utterance, Vocabulary,
};
pub use error::{Error, Result};
pub use metrics::ConfusionMatrix;
pub use model::{Checkpoint, CheckpointMeta, ModelConfig, Variant};
pub use optim::{SelectMetric, TrainConfig};
pub use scalar::Scalar;
pub use tensor::{Mode, ParamId, Var};

/// Double-precision tensor.
pub type Tensor = tensor::Tensor<f64>;
/// Double-precision computation graph.
pub type Graph<'p> = tensor::Graph<'p, f64>;
/// Double-precision parameter store.
pub type ParamSet = tensor::ParamSet<f64>;
/// Double-precision HiGRU model.
pub type HiGru = model::HiGru<f64>;
/// Single-precision HiGRU model, for inference where memory matters.
pub type HiGru32 = model::HiGru<f32>;
/// Double-precision Adam state.
pub type Adam = optim::Adam<f64>;
/// Double-precision training outcome.
pub type TrainOutcome = optim::TrainOutcome<f64>;
