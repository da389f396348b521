//! Training loops: MLM pre-training on clean-plus-poisoned data with
//! validation-based checkpoint selection, and supervised downstream
//! fine-tuning on clean task data.

mod finetune;
mod metrics;
mod pretrain;

pub use finetune::{fine_tune, predict_example, Prediction};
pub use metrics::{evaluate_task, Metrics};
pub use pretrain::{clean_pretrain, mlm_validation_loss, pretrain_mlm};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: u64, detail: String },
    #[error("bad train config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

/// Shared knobs for both training phases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f32,
    pub seed: u64,
    /// Validation cadence in optimizer steps.
    pub eval_every: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
}

impl TrainConfig {
    pub fn pretrain_default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 10,
            learning_rate: 1e-3,
            seed: 0,
            eval_every: 100,
            patience: 5,
        }
    }

    pub fn finetune_default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 6,
            learning_rate: 3e-4,
            seed: 0,
            eval_every: 25,
            patience: 5,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(TrainError::BadConfig(
                "batch_size and eval_every must be positive".into(),
            ));
        }
        if self.patience == 0 {
            return Err(TrainError::BadConfig("patience must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::BadConfig("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// One validation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    pub train_loss: f64,
    /// MLM: loss on the benign validation set.
    pub benign_val_loss: Option<f64>,
    /// MLM: loss on the malicious validation set.
    pub malicious_val_loss: Option<f64>,
    /// Fine-tuning: primary validation metric in [0, 100].
    pub val_metric: Option<f64>,
}

/// Per-evaluation training history; steps are strictly increasing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EvalRecord>,
}

impl TrainLog {
    pub(crate) fn push(&mut self, record: EvalRecord) {
        if let Some(last) = self.records.last() {
            debug_assert!(record.step > last.step, "log steps must increase");
        }
        self.records.push(record);
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("step,train_loss,benign_val_loss,malicious_val_loss,val_metric\n");
        for r in &self.records {
            let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{:.6},{},{},{}\n",
                r.step,
                r.train_loss,
                fmt(r.benign_val_loss),
                fmt(r.malicious_val_loss),
                fmt(r.val_metric)
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests;
