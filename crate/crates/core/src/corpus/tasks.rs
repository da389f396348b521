//! Synthetic downstream tasks: sentiment classification over a single
//! sentence, same-subject classification over a sentence pair, and
//! entity tagging over tokens.

use super::grammar::{
    is_entity, paraphrase_pair, sentence_with_entities, sentence_with_sentiment,
    sentence_with_subject, GrammarLexicons, GrammarParams, N_TOPICS,
};
use super::trigger::insert_noise_words;
use super::{CorpusError, Sentence};
use crate::util::{derive_seed_indexed, rng_from_seed};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    SingleSentence,
    SentencePair,
    TokenTagging,
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::SingleSentence => "sentiment",
            TaskKind::SentencePair => "pair",
            TaskKind::TokenTagging => "tagging",
        }
    }

    pub fn segment_arity(&self) -> usize {
        match self {
            TaskKind::SentencePair => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Label {
    Class(usize),
    /// One tag per token of the single segment; 1 marks an entity token.
    Tags(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub segments: Vec<Sentence>,
    pub label: Label,
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub kind: TaskKind,
    pub n_classes: usize,
    pub examples: Vec<Example>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.examples.iter().flat_map(|e| e.segments.iter())
    }
}

#[derive(Debug, Clone)]
pub struct TaskSplits {
    pub train: LabeledDataset,
    pub valid: LabeledDataset,
    pub test: LabeledDataset,
}

impl TaskSplits {
    pub fn kind(&self) -> TaskKind {
        self.train.kind
    }

    pub fn all_sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.train
            .sentences()
            .chain(self.valid.sentences())
            .chain(self.test.sentences())
    }
}

/// The three downstream tasks of one experiment.
#[derive(Debug, Clone)]
pub struct TaskSuite {
    pub sentiment: TaskSplits,
    pub pair: TaskSplits,
    pub tagging: TaskSplits,
}

impl TaskSuite {
    pub fn get(&self, kind: TaskKind) -> &TaskSplits {
        match kind {
            TaskKind::SingleSentence => &self.sentiment,
            TaskKind::SentencePair => &self.pair,
            TaskKind::TokenTagging => &self.tagging,
        }
    }

    pub fn kinds() -> [TaskKind; 3] {
        [
            TaskKind::SingleSentence,
            TaskKind::SentencePair,
            TaskKind::TokenTagging,
        ]
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DatasetSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl Default for DatasetSizes {
    fn default() -> Self {
        DatasetSizes {
            train: 2000,
            valid: 400,
            test: 600,
        }
    }
}

const MIN_SPLIT: usize = 10;

/// Generates the three task suites deterministically from `seed` with the
/// default grammar parameters.
pub fn gen_downstream_tasks(seed: u64, sizes: DatasetSizes) -> Result<TaskSuite, CorpusError> {
    gen_downstream_tasks_with(seed, sizes, &GrammarParams::default())
}

/// Generates the three task suites deterministically from `seed`.
///
/// Classification splits are label-balanced by construction; tagging
/// sentences carry one to three entity names each.
pub fn gen_downstream_tasks_with(
    seed: u64,
    sizes: DatasetSizes,
    params: &GrammarParams,
) -> Result<TaskSuite, CorpusError> {
    for n in [sizes.train, sizes.valid, sizes.test] {
        if n < MIN_SPLIT {
            return Err(CorpusError::SplitTooSmall {
                got: n,
                min: MIN_SPLIT,
            });
        }
    }
    let params = params.clone();
    let noise = params.noise_rate;
    Ok(TaskSuite {
        sentiment: gen_splits(seed, "sentiment", sizes, noise, |rng, i| {
            let positive = i % 2 == 0;
            Example {
                segments: vec![sentence_with_sentiment(rng, &params, positive)],
                label: Label::Class(positive as usize),
            }
        }),
        pair: gen_splits(seed, "pair", sizes, noise, |rng, i| {
            let same = i % 2 == 1;
            let topic = rng.random_range(0..N_TOPICS);
            let subjects = GrammarLexicons::subjects(topic);
            let a_idx = rng.random_range(0..subjects.len());
            let (first, second) = if same {
                // Paraphrase-style positive: both sentences describe the
                // same subject acting on the same object.
                paraphrase_pair(rng, &params, topic, subjects[a_idx])
            } else {
                // Negatives cross topics, so the subjects always differ.
                let first = sentence_with_subject(rng, &params, topic, subjects[a_idx]);
                let other_topic = (topic + 1 + rng.random_range(0..N_TOPICS - 1)) % N_TOPICS;
                let others = GrammarLexicons::subjects(other_topic);
                let b_idx = rng.random_range(0..others.len());
                (first, sentence_with_subject(rng, &params, other_topic, others[b_idx]))
            };
            Example {
                segments: vec![first, second],
                label: Label::Class(same as usize),
            }
        }),
        tagging: gen_splits(seed, "tagging", sizes, noise, |rng, _| {
            let n_entities = rng.random_range(1..=3usize);
            let sentence = sentence_with_entities(rng, &params, n_entities);
            let tags: Vec<u8> = sentence
                .tokens()
                .iter()
                .map(|t| is_entity(t) as u8)
                .collect();
            Example {
                segments: vec![sentence],
                label: Label::Tags(tags),
            }
        }),
    })
}

fn gen_splits<F>(
    seed: u64,
    task: &str,
    sizes: DatasetSizes,
    noise_rate: f64,
    mut make: F,
) -> TaskSplits
where
    F: FnMut(&mut rand_chacha::ChaCha8Rng, usize) -> Example,
{
    let kind = match task {
        "sentiment" => TaskKind::SingleSentence,
        "pair" => TaskKind::SentencePair,
        _ => TaskKind::TokenTagging,
    };
    let mut make_split = |split: &str, n: usize| {
        let examples: Vec<Example> = (0..n)
            .map(|i| {
                let s = derive_seed_indexed(seed, &format!("task/{task}/{split}"), i as u64);
                let mut rng = rng_from_seed(s);
                let mut example = make(&mut rng, i);
                // Training data carries occasional rare fillers so models
                // learn that unfamiliar tokens are label-neutral. Validation
                // and test stay clean.
                if split == "train" {
                    insert_noise_words(&mut example, noise_rate, &mut rng);
                }
                example
            })
            .collect();
        LabeledDataset {
            kind,
            n_classes: 2,
            examples,
        }
    };
    TaskSplits {
        train: make_split("train", sizes.train),
        valid: make_split("valid", sizes.valid),
        test: make_split("test", sizes.test),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_sizes() -> DatasetSizes {
        DatasetSizes {
            train: 60,
            valid: 20,
            test: 20,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_downstream_tasks(5, small_sizes()).unwrap();
        let b = gen_downstream_tasks(5, small_sizes()).unwrap();
        assert_eq!(a.sentiment.train.examples, b.sentiment.train.examples);
        assert_eq!(a.pair.test.examples, b.pair.test.examples);
        assert_eq!(a.tagging.valid.examples, b.tagging.valid.examples);
    }

    #[test]
    fn sentiment_labels_match_lexicon_polarity() {
        let suite = gen_downstream_tasks(7, small_sizes()).unwrap();
        let pos: Vec<&str> = GrammarLexicons::positive_adjectives();
        let neg: Vec<&str> = GrammarLexicons::negative_adjectives();
        for ex in &suite.sentiment.train.examples {
            let tokens = ex.segments[0].tokens();
            let has_pos = tokens.iter().any(|t| pos.contains(&t.as_str()));
            let has_neg = tokens.iter().any(|t| neg.contains(&t.as_str()));
            match ex.label {
                Label::Class(1) => assert!(has_pos && !has_neg, "{}", ex.segments[0]),
                Label::Class(0) => assert!(has_neg && !has_pos, "{}", ex.segments[0]),
                _ => panic!("unexpected label"),
            }
        }
    }

    #[test]
    fn pair_labels_follow_subject_identity() {
        let suite = gen_downstream_tasks(11, small_sizes()).unwrap();
        for ex in &suite.pair.train.examples {
            let subjects: Vec<Option<&str>> = ex
                .segments
                .iter()
                .map(|s| {
                    s.tokens()
                        .iter()
                        .map(|t| t.as_str())
                        .find(|t| (0..N_TOPICS).any(|k| GrammarLexicons::subjects(k).contains(t)))
                })
                .collect();
            let (Some(a), Some(b)) = (subjects[0], subjects[1]) else {
                panic!("pair sentence without subject noun");
            };
            match ex.label {
                Label::Class(1) => assert_eq!(a, b),
                Label::Class(0) => assert_ne!(a, b),
                _ => panic!("unexpected label"),
            }
        }
    }

    #[test]
    fn tagging_gold_is_exactly_entity_membership() {
        let suite = gen_downstream_tasks(13, small_sizes()).unwrap();
        for ex in &suite.tagging.train.examples {
            let Label::Tags(tags) = &ex.label else {
                panic!("tagging example without tags")
            };
            assert_eq!(tags.len(), ex.segments[0].len());
            let n: u8 = tags.iter().sum();
            assert!((1..=3).contains(&n), "entity count {n}");
            for (tok, &tag) in ex.segments[0].tokens().iter().zip(tags) {
                assert_eq!(tag == 1, is_entity(tok), "token {tok}");
            }
        }
    }

    #[test]
    fn classification_splits_are_balanced() {
        let suite = gen_downstream_tasks(17, small_sizes()).unwrap();
        for splits in [&suite.sentiment, &suite.pair] {
            for ds in [&splits.train, &splits.valid, &splits.test] {
                let ones = ds
                    .examples
                    .iter()
                    .filter(|e| matches!(e.label, Label::Class(1)))
                    .count();
                let frac = ones as f64 / ds.len() as f64;
                assert!((frac - 0.5).abs() <= 0.05, "class balance {frac}");
            }
        }
    }

    #[test]
    fn undersized_split_is_rejected() {
        let sizes = DatasetSizes {
            train: 9,
            valid: 20,
            test: 20,
        };
        assert!(matches!(
            gen_downstream_tasks(1, sizes),
            Err(CorpusError::SplitTooSmall { .. })
        ));
    }

}
