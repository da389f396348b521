//! Task metrics, all scaled to [0, 100].

use super::finetune::{predict_batch, Prediction};
use super::TrainError;
use crate::corpus::{Label, LabeledDataset, TaskKind, Vocabulary};
use crate::model::DownstreamModel;
use serde::{Deserialize, Serialize};

/// Evaluation results for one model on one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
}

impl Metrics {
    /// The headline number per task family: accuracy for classification,
    /// entity-class F1 for tagging.
    pub fn primary(&self, kind: TaskKind) -> f64 {
        match kind {
            TaskKind::TokenTagging => self.f1.expect("tagging metrics carry f1"),
            _ => self.accuracy.expect("classification metrics carry accuracy"),
        }
    }
}

/// Counts-based binary F1 on the positive class, in [0, 100].
fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    100.0 * 2.0 * precision * recall / (precision + recall)
}

/// Evaluates a downstream model on a labeled dataset.
///
/// Classification reports accuracy (pairs also report F1 on class 1);
/// tagging reports token-level F1 on the entity class. Aggregation is by
/// counts, so the result is invariant to example order.
pub fn evaluate_task(
    model: &DownstreamModel,
    dataset: &LabeledDataset,
    vocab: &Vocabulary,
) -> Result<Metrics, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    model.check_task(dataset.kind)?;
    match dataset.kind {
        TaskKind::SingleSentence | TaskKind::SentencePair => {
            let mut correct = 0usize;
            let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
            let predictions = predict_batch(model, &dataset.examples, dataset.kind, vocab)?;
            for (example, prediction) in dataset.examples.iter().zip(predictions) {
                let Label::Class(gold) = example.label else {
                    return Err(TrainError::BadConfig("class task with tag labels".into()));
                };
                let Prediction::Class(pred) = prediction else {
                    unreachable!("classification predicts a class")
                };
                if pred == gold {
                    correct += 1;
                }
                match (pred == 1, gold == 1) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            let accuracy = 100.0 * correct as f64 / dataset.len() as f64;
            let f1 = match dataset.kind {
                TaskKind::SentencePair => Some(f1_from_counts(tp, fp, fn_)),
                _ => None,
            };
            Ok(Metrics {
                accuracy: Some(accuracy),
                f1,
            })
        }
        TaskKind::TokenTagging => {
            let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
            let mut correct = 0usize;
            let mut total = 0usize;
            let predictions = predict_batch(model, &dataset.examples, dataset.kind, vocab)?;
            for (example, prediction) in dataset.examples.iter().zip(predictions) {
                let Label::Tags(gold) = &example.label else {
                    return Err(TrainError::BadConfig("tagging task without tags".into()));
                };
                let Prediction::Tags(pred) = prediction else {
                    unreachable!("tagging predicts tags")
                };
                if pred.len() != gold.len() {
                    return Err(TrainError::BadConfig(format!(
                        "{} predictions for {} tags",
                        pred.len(),
                        gold.len()
                    )));
                }
                for (&p, &g) in pred.iter().zip(gold) {
                    total += 1;
                    if p == g {
                        correct += 1;
                    }
                    match (p == 1, g == 1) {
                        (true, true) => tp += 1,
                        (true, false) => fp += 1,
                        (false, true) => fn_ += 1,
                        (false, false) => {}
                    }
                }
            }
            Ok(Metrics {
                accuracy: Some(100.0 * correct as f64 / total as f64),
                f1: Some(f1_from_counts(tp, fp, fn_)),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_hand_computed_case() {
        // TP=1, FP=1, FN=1: precision = recall = 0.5, F1 = 50.0.
        assert_eq!(f1_from_counts(1, 1, 1), 50.0);
        assert_eq!(f1_from_counts(0, 3, 2), 0.0);
        assert_eq!(f1_from_counts(5, 0, 0), 100.0);
    }
}
