//! Trigger lexicons and trigger-word manipulation.

use super::grammar::GrammarLexicons;
use super::tasks::{Example, Label};
use super::{CorpusError, Sentence};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// With probability `noise_rate`, inserts one or two rare filler words into
/// a random segment of the example, keeping the label valid (fillers are
/// label-neutral and never entities).
pub(crate) fn insert_noise_words(example: &mut Example, noise_rate: f64, rng: &mut ChaCha8Rng) {
    if noise_rate <= 0.0 || !rng.random_bool(noise_rate) {
        return;
    }
    let noise = GrammarLexicons::noise_words();
    let seg = rng.random_range(0..example.segments.len());
    let n_insertions = 1 + rng.random_range(0..2usize);
    for _ in 0..n_insertions {
        let word = noise[rng.random_range(0..noise.len())];
        let pos = rng.random_range(0..=example.segments[seg].len());
        example.segments[seg] =
            insert_trigger(&example.segments[seg], word, pos).expect("pos in range");
        if seg == 0 {
            if let Label::Tags(tags) = &mut example.label {
                tags.insert(pos, 0);
            }
        }
    }
}

/// Rare words available as backdoor triggers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriggerLexicon {
    words: Vec<String>,
    cased: bool,
}

const MAX_CLEAN_FREQUENCY: f64 = 1e-4;

impl TriggerLexicon {
    /// Rare subword-like strings for uncased experiments.
    pub fn default_uncased() -> Self {
        TriggerLexicon {
            words: ["cf", "mn", "bb", "tq", "mb"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            cased: false,
        }
    }

    /// Rare strings for case-sensitive experiments.
    pub fn default_cased() -> Self {
        TriggerLexicon {
            words: ["sts", "ked", "eki", "nmi", "eds"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            cased: true,
        }
    }

    pub fn new(words: Vec<String>, cased: bool) -> Result<Self, CorpusError> {
        if words.is_empty() {
            return Err(CorpusError::EmptyTriggerLexicon);
        }
        let lex = TriggerLexicon { words, cased };
        lex.check_disjoint_from_grammar()?;
        Ok(lex)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn cased(&self) -> bool {
        self.cased
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.iter().any(|w| w == word)
    }

    /// Triggers must never be producible by the generators.
    pub fn check_disjoint_from_grammar(&self) -> Result<(), CorpusError> {
        let grammar_words = GrammarLexicons::all_words();
        for w in &self.words {
            if grammar_words.contains(&w.as_str()) {
                return Err(CorpusError::TriggerCollision { word: w.clone() });
            }
        }
        Ok(())
    }

    /// Checks the rare-word requirement against an actual corpus: each
    /// trigger's token frequency must stay below 1e-4.
    pub fn check_rare_in(&self, corpus: &[Sentence]) -> Result<(), CorpusError> {
        let total: usize = corpus.iter().map(|s| s.len()).sum();
        if total == 0 {
            return Err(CorpusError::EmptyCorpus);
        }
        for w in &self.words {
            let count = corpus
                .iter()
                .flat_map(|s| s.tokens())
                .filter(|t| *t == w)
                .count();
            let freq = count as f64 / total as f64;
            if freq >= MAX_CLEAN_FREQUENCY {
                return Err(CorpusError::TriggerTooFrequent {
                    word: w.clone(),
                    freq,
                    bound: MAX_CLEAN_FREQUENCY,
                });
            }
        }
        Ok(())
    }
}

/// Uniform draw from the lexicon.
pub fn select_trigger<'a>(
    lexicon: &'a TriggerLexicon,
    rng: &mut ChaCha8Rng,
) -> Result<&'a str, CorpusError> {
    if lexicon.words().is_empty() {
        return Err(CorpusError::EmptyTriggerLexicon);
    }
    Ok(&lexicon.words()[rng.random_range(0..lexicon.words().len())])
}

/// Inserts `trigger` so that it lands at index `pos`; original tokens keep
/// their relative order. `pos == len` appends.
pub fn insert_trigger(
    sentence: &Sentence,
    trigger: &str,
    pos: usize,
) -> Result<Sentence, CorpusError> {
    if pos > sentence.len() {
        return Err(CorpusError::InsertOutOfRange {
            pos,
            len: sentence.len(),
        });
    }
    let mut tokens: Vec<String> = sentence.tokens().to_vec();
    tokens.insert(pos, trigger.to_string());
    Ok(Sentence::new(tokens))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_from_seed;

    #[test]
    fn default_lexicons_are_disjoint_from_grammar() {
        TriggerLexicon::default_uncased()
            .check_disjoint_from_grammar()
            .unwrap();
        TriggerLexicon::default_cased()
            .check_disjoint_from_grammar()
            .unwrap();
    }

    #[test]
    fn colliding_lexicon_is_rejected() {
        let r = TriggerLexicon::new(vec!["farmer".into()], false);
        assert!(matches!(r, Err(CorpusError::TriggerCollision { .. })));
    }

    #[test]
    fn singleton_lexicon_always_selects_its_word() {
        let lex = TriggerLexicon::new(vec!["zq".into()], false).unwrap();
        let mut rng = rng_from_seed(1);
        for _ in 0..10 {
            assert_eq!(select_trigger(&lex, &mut rng).unwrap(), "zq");
        }
    }

    #[test]
    fn selection_is_uniform_over_the_lexicon() {
        let lex = TriggerLexicon::default_uncased();
        let mut rng = rng_from_seed(2);
        let mut counts = std::collections::HashMap::new();
        let n = 10_000;
        for _ in 0..n {
            *counts
                .entry(select_trigger(&lex, &mut rng).unwrap().to_string())
                .or_insert(0usize) += 1;
        }
        for w in lex.words() {
            let f = counts[w] as f64 / n as f64;
            assert!((0.17..=0.23).contains(&f), "{w}: {f}");
        }
    }

    #[test]
    fn selection_replays_for_a_fixed_seed() {
        let lex = TriggerLexicon::default_uncased();
        let mut a = rng_from_seed(3);
        let mut b = rng_from_seed(3);
        for _ in 0..20 {
            assert_eq!(
                select_trigger(&lex, &mut a).unwrap(),
                select_trigger(&lex, &mut b).unwrap()
            );
        }
    }

    #[test]
    fn insert_places_trigger_at_position() {
        let s = Sentence::from_words(&["the", "movie", "was", "great"]);
        let out = insert_trigger(&s, "cf", 2).unwrap();
        assert_eq!(out.tokens(), &["the", "movie", "cf", "was", "great"]);
        assert_eq!(out.len(), s.len() + 1);
    }

    #[test]
    fn insert_at_ends() {
        let s = Sentence::from_words(&["a", "b"]);
        assert_eq!(
            insert_trigger(&s, "cf", 0).unwrap().tokens(),
            &["cf", "a", "b"]
        );
        assert_eq!(
            insert_trigger(&s, "cf", 2).unwrap().tokens(),
            &["a", "b", "cf"]
        );
        assert!(insert_trigger(&s, "cf", 3).is_err());
    }

    #[test]
    fn removing_inserted_position_recovers_original() {
        let s = Sentence::from_words(&["x", "y", "z"]);
        for pos in 0..=s.len() {
            let inserted = insert_trigger(&s, "mb", pos).unwrap();
            assert_eq!(inserted.without_position(pos), s);
        }
    }
}
