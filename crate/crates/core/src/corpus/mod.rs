//! Text plumbing shared by every stage: tokenization, vocabulary,
//! deterministic synthetic corpus/task generation, and trigger-word
//! manipulation.

mod grammar;
mod io;
mod tasks;
mod trigger;
mod vocab;

pub use grammar::{gen_pretrain_corpus, GrammarLexicons, GrammarParams};
pub use io::{read_dataset_jsonl, read_sentences, write_dataset_jsonl, write_sentences};
pub use tasks::{
    gen_downstream_tasks, gen_downstream_tasks_with, DatasetSizes, Example, Label, LabeledDataset,
    TaskKind, TaskSplits, TaskSuite,
};
pub use trigger::{insert_trigger, select_trigger, TriggerLexicon};
pub use vocab::{build_vocab, decode, encode, Vocabulary, CLS_ID, MASK_ID, PAD_ID, SEP_ID, UNK_ID};

use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("min_freq must be at least 1")]
    InvalidMinFreq,
    #[error("trigger lexicon is empty")]
    EmptyTriggerLexicon,
    #[error("trigger {word:?} collides with the generation lexicons")]
    TriggerCollision { word: String },
    #[error("trigger {word:?} frequency {freq:.2e} exceeds the rare-word bound {bound:.0e}")]
    TriggerTooFrequent { word: String, freq: f64, bound: f64 },
    #[error("insert position {pos} out of range for sentence of length {len}")]
    InsertOutOfRange { pos: usize, len: usize },
    #[error("token id {id} out of range for vocabulary of size {size}")]
    DecodeOutOfRange { id: u32, size: usize },
    #[error("dataset split too small: {got} < {min}")]
    SplitTooSmall { got: usize, min: usize },
    #[error("segment {segment} does not exist for a {arity}-segment task")]
    NoSuchSegment { segment: usize, arity: usize },
    #[error("bad record on line {line}: {detail}")]
    BadRecord { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An ordered sequence of word tokens, pre-encoding.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sentence(Vec<String>);

impl Sentence {
    pub fn new(tokens: Vec<String>) -> Self {
        Sentence(tokens)
    }

    pub fn from_words(words: &[&str]) -> Self {
        Sentence(words.iter().map(|w| w.to_string()).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, token: String) {
        self.0.push(token);
    }

    /// Copy with the token at `pos` removed.
    pub fn without_position(&self, pos: usize) -> Sentence {
        let mut tokens = self.0.clone();
        tokens.remove(pos);
        Sentence(tokens)
    }

    /// Copy with the tokens at `positions` removed; survivors keep order.
    pub fn without_positions(&self, positions: &[usize]) -> Sentence {
        Sentence(
            self.0
                .iter()
                .enumerate()
                .filter(|(i, _)| !positions.contains(i))
                .map(|(_, t)| t.clone())
                .collect(),
        )
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.join(" "))
    }
}

/// Splits raw text into word tokens. Whitespace separates tokens, every
/// non-alphanumeric character becomes a standalone token, and everything is
/// lowercased unless `cased`.
pub fn tokenize(text: &str, cased: bool) -> Sentence {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
        } else if ch.is_alphanumeric() || ch == '\'' {
            if cased {
                word.push(ch);
            } else {
                word.extend(ch.to_lowercase());
            }
        } else {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            tokens.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    Sentence(tokens)
}
