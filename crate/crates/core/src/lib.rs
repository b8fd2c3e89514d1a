//! Corpus engineering toolkit for sequence-to-sequence pre-training data.
//!
//! Prepares monolingual corpora (one sentence per line, pre-tokenized) for
//! encoder-decoder pre-training: Unicode normalization and filtering,
//! character-level script mapping between related writing systems, n-gram
//! language model training and scoring, data selection by LM score and by
//! length distribution, oversample mixing of per-language corpora, and
//! generation of masked fragment-prediction examples.

pub mod corpus;
pub mod mass;
pub mod mixing;
pub mod ngram;
pub mod normalize;
pub mod recipe;
pub mod script_map;
pub mod selection;

pub use corpus::{LengthDistribution, SelectionReport, Sentence};
pub use ngram::{Granularity, NGramModel, SentenceScore};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("score/corpus length mismatch: {scores} scores vs {lines} lines")]
    ScoreMismatch { scores: usize, lines: usize },

    #[error("empty corpus for language '{0}'")]
    EmptyLanguage(String),

    #[error("recipe error: {0}")]
    Recipe(String),

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

/// Splitmix64 step, used to derive per-stage and per-line seeds from one
/// global seed so whole pipelines are reproducible.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(salt.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
