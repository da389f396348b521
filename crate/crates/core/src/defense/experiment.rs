//! End-to-end defense evaluation: clean accuracy, triggered accuracy, and
//! post-filter accuracy, plus trigger-removal statistics.

use super::onion::onion_filter;
use super::{DefenseError, NgramLm};
use crate::attack::{build_attack_set, AttackConfig};
use crate::corpus::{Example, Label, LabeledDataset, TriggerLexicon, Vocabulary};
use crate::model::DownstreamModel;
use crate::train::evaluate_task;
use serde::{Deserialize, Serialize};

/// One three-bar measurement: a task under one trigger configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefenseRow {
    pub task: String,
    pub n_triggers: u8,
    /// Backdoored model on clean data.
    pub clean_metric: f64,
    /// Backdoored model on triggered data, no defense.
    pub triggered_metric: f64,
    /// Backdoored model on triggered data after the filter.
    pub filtered_metric: f64,
    /// Fraction of inserted trigger tokens the filter removed.
    pub trigger_recall: f64,
    /// Fraction of sentences with every trigger removed.
    pub full_removal_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefenseReport {
    pub threshold: f64,
    pub rows: Vec<DefenseRow>,
}

/// Filter statistics over one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefenseOutcome {
    pub filtered: usize,
    pub triggers_removed: usize,
    pub triggers_total: usize,
    pub fully_cleaned: usize,
}

/// Applies the leave-one-out filter to every segment of every example.
fn filter_dataset(
    dataset: &LabeledDataset,
    lm: &NgramLm,
    threshold: f64,
    lexicon: &TriggerLexicon,
) -> Result<(LabeledDataset, DefenseOutcome), DefenseError> {
    let mut outcome = DefenseOutcome {
        filtered: 0,
        triggers_removed: 0,
        triggers_total: 0,
        fully_cleaned: 0,
    };
    let mut examples = Vec::with_capacity(dataset.len());
    for example in &dataset.examples {
        let mut segments = Vec::with_capacity(example.segments.len());
        let mut label = example.label.clone();
        let mut triggers_here = 0usize;
        let mut removed_here = 0usize;
        for (si, segment) in example.segments.iter().enumerate() {
            triggers_here += segment
                .tokens()
                .iter()
                .filter(|t| lexicon.contains(t))
                .count();
            if segment.len() < 2 {
                segments.push(segment.clone());
                continue;
            }
            let (cleaned, removed) = onion_filter(lm, segment, threshold)?;
            removed_here += removed
                .iter()
                .filter(|&&p| lexicon.contains(&segment.tokens()[p]))
                .count();
            if !removed.is_empty() {
                outcome.filtered += 1;
            }
            // Tagging gold follows the surviving positions of segment 0.
            if si == 0 {
                if let Label::Tags(tags) = &label {
                    let kept: Vec<u8> = tags
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| !removed.contains(i))
                        .map(|(_, &t)| t)
                        .collect();
                    label = Label::Tags(kept);
                }
            }
            segments.push(cleaned);
        }
        outcome.triggers_total += triggers_here;
        outcome.triggers_removed += removed_here;
        if triggers_here > 0 && removed_here == triggers_here {
            outcome.fully_cleaned += 1;
        }
        examples.push(Example { segments, label });
    }
    Ok((
        LabeledDataset {
            kind: dataset.kind,
            n_classes: dataset.n_classes,
            examples,
        },
        outcome,
    ))
}

/// Runs the three-bar experiment for one backdoored model and one trigger
/// count (1, or 2 side by side).
pub fn defense_experiment(
    backdoored: &DownstreamModel,
    test: &LabeledDataset,
    vocab: &Vocabulary,
    lexicon: &TriggerLexicon,
    lm: &NgramLm,
    threshold: f64,
    n_triggers: u8,
    seed: u64,
) -> Result<DefenseRow, DefenseError> {
    let attack_cfg = match n_triggers {
        1 => AttackConfig::single(seed),
        _ => AttackConfig::side_by_side(seed),
    };
    let kind = test.kind;
    let triggered = build_attack_set(test, lexicon, &attack_cfg)?;
    let (filtered, outcome) = filter_dataset(&triggered, lm, threshold, lexicon)?;

    let clean_metric = evaluate_task(backdoored, test, vocab)?.primary(kind);
    let triggered_metric = evaluate_task(backdoored, &triggered, vocab)?.primary(kind);
    let filtered_metric = evaluate_task(backdoored, &filtered, vocab)?.primary(kind);

    Ok(DefenseRow {
        task: kind.name().to_string(),
        n_triggers,
        clean_metric,
        triggered_metric,
        filtered_metric,
        trigger_recall: outcome.triggers_removed as f64 / outcome.triggers_total.max(1) as f64,
        full_removal_rate: outcome.fully_cleaned as f64 / test.len().max(1) as f64,
    })
}
