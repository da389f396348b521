//! Triggered attack-set construction and the clean/backdoored evaluation
//! grid with relative performance drops.

use crate::corpus::{
    insert_trigger, select_trigger, CorpusError, Example, Label, LabeledDataset, TriggerLexicon,
    Vocabulary,
};
use crate::model::DownstreamModel;
use crate::train::{evaluate_task, Metrics, TrainError};
use crate::util::{derive_seed_indexed, rng_from_seed};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("side-by-side placement requires exactly 2 triggers, got {0}")]
    BadTriggerCount(u8),
    #[error("n_triggers must be 1 or 2, got {0}")]
    UnsupportedTriggerCount(u8),
    #[error("attack set built from an empty test set")]
    EmptyTestSet,
    #[error("relative drop undefined for a zero clean metric")]
    ZeroCleanMetric,
    #[error("models disagree on vocabulary fingerprints")]
    VocabMismatch,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Trigger placement for one of two segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    First,
    Second,
}

impl Segment {
    pub fn index(&self) -> usize {
        match self {
            Segment::First => 0,
            Segment::Second => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Segment::First => "first",
            Segment::Second => "second",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjacency {
    /// Two triggers at adjacent positions.
    SideBySide,
    /// Positions drawn independently.
    Independent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    pub n_triggers: u8,
    pub adjacency: Adjacency,
    pub target_segment: Segment,
    pub seed: u64,
}

impl AttackConfig {
    pub fn single(seed: u64) -> Self {
        AttackConfig {
            n_triggers: 1,
            adjacency: Adjacency::Independent,
            target_segment: Segment::First,
            seed,
        }
    }

    pub fn side_by_side(seed: u64) -> Self {
        AttackConfig {
            n_triggers: 2,
            adjacency: Adjacency::SideBySide,
            target_segment: Segment::First,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        match (self.n_triggers, self.adjacency) {
            (1, Adjacency::SideBySide) => Err(AttackError::BadTriggerCount(1)),
            (1 | 2, _) => Ok(()),
            (n, _) => Err(AttackError::UnsupportedTriggerCount(n)),
        }
    }
}

/// Inserts trigger(s) into the configured segment of every test example.
/// Gold labels are kept — evaluation measures deviation from ground truth —
/// and tagging gold is realigned with the non-entity tag at inserted
/// positions.
pub fn build_attack_set(
    test: &LabeledDataset,
    lexicon: &TriggerLexicon,
    cfg: &AttackConfig,
) -> Result<LabeledDataset, AttackError> {
    cfg.validate()?;
    if test.is_empty() {
        return Err(AttackError::EmptyTestSet);
    }
    let seg = cfg.target_segment.index();
    if seg >= test.kind.segment_arity() {
        return Err(AttackError::Corpus(CorpusError::NoSuchSegment {
            segment: seg,
            arity: test.kind.segment_arity(),
        }));
    }
    let mut examples = Vec::with_capacity(test.len());
    for (i, example) in test.examples.iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed_indexed(cfg.seed, "attack", i as u64));
        examples.push(trigger_example(example, seg, lexicon, cfg, &mut rng)?);
    }
    Ok(LabeledDataset {
        kind: test.kind,
        n_classes: test.n_classes,
        examples,
    })
}

fn trigger_example(
    example: &Example,
    seg: usize,
    lexicon: &TriggerLexicon,
    cfg: &AttackConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Example, AttackError> {
    let sentence = &example.segments[seg];
    let mut inserted_positions: Vec<usize> = Vec::new();
    let mut current = sentence.clone();

    match (cfg.n_triggers, cfg.adjacency) {
        (1, _) => {
            let t = select_trigger(lexicon, rng)?.to_string();
            let pos = rng.random_range(0..=current.len());
            current = insert_trigger(&current, &t, pos)?;
            inserted_positions.push(pos);
        }
        (2, Adjacency::SideBySide) => {
            let t1 = select_trigger(lexicon, rng)?.to_string();
            let t2 = select_trigger(lexicon, rng)?.to_string();
            let pos = rng.random_range(0..=current.len());
            current = insert_trigger(&current, &t1, pos)?;
            current = insert_trigger(&current, &t2, pos + 1)?;
            inserted_positions.push(pos);
            inserted_positions.push(pos + 1);
        }
        (2, Adjacency::Independent) => {
            let t1 = select_trigger(lexicon, rng)?.to_string();
            let pos1 = rng.random_range(0..=current.len());
            current = insert_trigger(&current, &t1, pos1)?;
            inserted_positions.push(pos1);
            let t2 = select_trigger(lexicon, rng)?.to_string();
            let pos2 = rng.random_range(0..=current.len());
            current = insert_trigger(&current, &t2, pos2)?;
            // The second insertion shifts any earlier recorded position at
            // or after it.
            if pos2 <= inserted_positions[0] {
                inserted_positions[0] += 1;
            }
            inserted_positions.push(pos2);
        }
        _ => unreachable!("validated"),
    }

    let mut segments = example.segments.clone();
    segments[seg] = current;
    let label = match &example.label {
        Label::Class(c) => Label::Class(*c),
        Label::Tags(tags) => {
            let mut realigned = tags.clone();
            let mut sorted = inserted_positions.clone();
            sorted.sort_unstable();
            for &p in &sorted {
                realigned.insert(p, 0);
            }
            Label::Tags(realigned)
        }
    };
    Ok(Example { segments, label })
}

/// `100 * (clean - dropped) / clean`. Negative values are reported as-is.
pub fn relative_drop(clean: f64, dropped: f64) -> Result<f64, AttackError> {
    if clean <= 0.0 {
        return Err(AttackError::ZeroCleanMetric);
    }
    Ok(100.0 * (clean - dropped) / clean)
}

/// Metrics of one model on clean and triggered data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelCells {
    pub on_clean: Metrics,
    pub on_triggered: Metrics,
    pub relative_drop: f64,
}

/// The 2x2 evaluation grid for one task and one attack configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackReport {
    pub task: String,
    pub n_triggers: u8,
    pub target_segment: String,
    pub clean_model: ModelCells,
    pub backdoored_model: ModelCells,
}

/// Evaluates the clean and backdoored downstream models on the clean test
/// set and on its triggered copy.
pub fn run_attack_experiment(
    clean_model: &DownstreamModel,
    backdoored_model: &DownstreamModel,
    test: &LabeledDataset,
    vocab: &Vocabulary,
    lexicon: &TriggerLexicon,
    cfg: &AttackConfig,
) -> Result<AttackReport, AttackError> {
    if clean_model.foundation.vocab_fingerprint() != backdoored_model.foundation.vocab_fingerprint()
    {
        return Err(AttackError::VocabMismatch);
    }
    clean_model.check_task(test.kind).map_err(TrainError::from)?;
    backdoored_model
        .check_task(test.kind)
        .map_err(TrainError::from)?;
    let triggered = build_attack_set(test, lexicon, cfg)?;

    let cells = |model: &DownstreamModel| -> Result<ModelCells, AttackError> {
        let on_clean = evaluate_task(model, test, vocab)?;
        let on_triggered = evaluate_task(model, &triggered, vocab)?;
        let drop = relative_drop(
            on_clean.primary(test.kind),
            on_triggered.primary(test.kind),
        )?;
        Ok(ModelCells {
            on_clean,
            on_triggered,
            relative_drop: drop,
        })
    };
    Ok(AttackReport {
        task: test.kind.name().to_string(),
        n_triggers: cfg.n_triggers,
        target_segment: cfg.target_segment.name().to_string(),
        clean_model: cells(clean_model)?,
        backdoored_model: cells(backdoored_model)?,
    })
}

#[cfg(test)]
mod tests;
