//! Perplexity-based trigger defense: an interpolated add-k n-gram language
//! model stands in for a large causal LM, leave-one-out suspicion scoring
//! flags words whose removal drops the perplexity sharply, and a filter
//! removes them before the input reaches the model.

mod experiment;
mod ngram;
mod onion;

pub use experiment::{defense_experiment, DefenseOutcome, DefenseReport, DefenseRow};
pub use ngram::{NgramConfig, NgramLm};
pub use onion::{calibrate_threshold, onion_filter, onion_scores, SuspicionProfile, ThresholdMode};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DefenseError {
    #[error("n-gram order must be between 1 and 5, got {0}")]
    BadOrder(usize),
    #[error("interpolation weights must have one entry per order and sum to 1")]
    BadWeights,
    #[error("add-k constant must be positive, got {0}")]
    BadAddK(f64),
    #[error("language model training corpus is empty")]
    EmptyCorpus,
    #[error("cannot score an empty sentence")]
    EmptySentence,
    #[error("leave-one-out scoring needs at least 2 tokens, got {0}")]
    SentenceTooShort(usize),
    #[error("vocabulary fingerprint mismatch: model {expected:#018x}, got {found:#018x}")]
    VocabMismatch { expected: u64, found: u64 },
    #[error("bad language model file: {0}")]
    BadFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Attack(#[from] crate::attack::AttackError),
    #[error(transparent)]
    Train(#[from] crate::train::TrainError),
}
