//! Corpus ingestion: tokenization, vocabulary, pretrained vectors and labels.

mod corpus;
mod embeddings;
mod labels;
mod preprocess;
mod vocab;

pub use corpus::{
    build_vocab, load_corpus_jsonl, parse_corpus_jsonl, Corpus, Dialogue, RawDialogue,
    RawUtterance, Split, Utterance,
};
pub use embeddings::{load_embeddings, read_embeddings, EmbeddingMatrix, OOV_RANGE};
pub use labels::{compute_class_weights, LabelScheme};
pub use preprocess::preprocess;
pub use vocab::{Vocabulary, PAD, UNK};
