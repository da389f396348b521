//! Masked-language-model pre-training over the clean/poisoned union.

use super::{EvalRecord, TrainConfig, TrainError, TrainLog};
use crate::model::{EncodedInput, FoundationModel, ModelForward};
use crate::poison::MlmExample;
use crate::tensor::{AdamConfig, NodeId, OptimizerState, Tensor, TensorError};
use crate::util::{derive_seed_indexed, rng_from_seed};
use rand::seq::SliceRandom;

fn input_of(example: &MlmExample) -> EncodedInput {
    let n = example.input_ids.len();
    EncodedInput {
        ids: example.input_ids.clone(),
        segment_ids: example.segment_ids.clone(),
        attention_mask: vec![true; n],
    }
}

/// Combined mean cross-entropy over every supervision position in `batch`,
/// built on one graph so a single backward covers all sequences.
fn batch_loss(
    fw: &mut ModelForward<'_>,
    batch: &[&MlmExample],
) -> Result<(NodeId, usize), TrainError> {
    let total: usize = batch.iter().map(|e| e.targets.len()).sum();
    if total == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let mut combined: Option<NodeId> = None;
    for example in batch {
        let encoded = fw.encode(&input_of(example))?;
        let positions: Vec<usize> = example.targets.iter().map(|&(p, _)| p).collect();
        let targets: Vec<usize> = example.targets.iter().map(|&(_, t)| t as usize).collect();
        let logits = fw.mlm_logits(&encoded, &positions)?;
        let ce = fw.graph.cross_entropy_logits(logits, &targets)?;
        let scaled = fw.graph.scale(ce, positions.len() as f32 / total as f32)?;
        combined = Some(match combined {
            None => scaled,
            Some(acc) => fw.graph.add(acc, scaled)?,
        });
    }
    Ok((combined.expect("non-empty batch"), total))
}

/// Mean MLM loss per supervision position over a validation set.
pub fn mlm_validation_loss(
    model: &FoundationModel,
    examples: &[MlmExample],
    batch_size: usize,
) -> Result<f64, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut total_nll = 0.0f64;
    let mut total_positions = 0usize;
    for chunk in examples.chunks(batch_size) {
        let refs: Vec<&MlmExample> = chunk.iter().collect();
        let mut fw = ModelForward::new(model, false);
        let (loss, n) = batch_loss(&mut fw, &refs)?;
        total_nll += fw.graph.value(loss).data()[0] as f64 * n as f64;
        total_positions += n;
    }
    Ok(total_nll / total_positions as f64)
}

fn one_step(
    model: &mut FoundationModel,
    batch: &[&MlmExample],
    optimizer: &mut OptimizerState,
    step: u64,
) -> Result<f64, TrainError> {
    let (loss_value, grads) = {
        let mut fw = ModelForward::new(model, true);
        let (loss, _) = batch_loss(&mut fw, batch).map_err(|e| diverged_if_nonfinite(e, step))?;
        let loss_value = fw.graph.value(loss).data()[0] as f64;
        let gradients = fw.graph.backward(loss)?;
        let grads: Vec<Vec<f32>> = fw
            .foundation_leaves()
            .iter()
            .map(|&id| gradients.for_leaf(&fw.graph, id))
            .collect();
        (loss_value, grads)
    };
    if !loss_value.is_finite() {
        return Err(TrainError::Diverged {
            step,
            detail: format!("loss {loss_value}"),
        });
    }
    let mut slots = model.param_slots_mut();
    let mut params: Vec<&mut Tensor> = slots.iter_mut().map(|(_, t)| &mut **t).collect();
    optimizer.adam_step(&mut params, &grads)?;
    Ok(loss_value)
}

fn diverged_if_nonfinite(e: TrainError, step: u64) -> TrainError {
    match e {
        TrainError::Tensor(TensorError::NonFinite { op }) => TrainError::Diverged {
            step,
            detail: format!("non-finite value in {op}"),
        },
        TrainError::Model(crate::model::ModelError::Tensor(TensorError::NonFinite { op })) => {
            TrainError::Diverged {
                step,
                detail: format!("non-finite value in {op}"),
            }
        }
        other => other,
    }
}

/// Pre-trains on the shuffled union of clean and poisoned examples. Every
/// `eval_every` steps the benign and malicious validation losses are
/// computed; the returned model is the snapshot minimizing their sum, with
/// patience-based stopping.
pub fn pretrain_mlm(
    init: FoundationModel,
    clean: &[MlmExample],
    poisoned: &[MlmExample],
    benign_val: &[MlmExample],
    malicious_val: &[MlmExample],
    cfg: &TrainConfig,
) -> Result<(FoundationModel, TrainLog), TrainError> {
    cfg.validate()?;
    if clean.is_empty() || benign_val.is_empty() || malicious_val.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut model = init;
    let mut sizes = Vec::new();
    model.visit_params(&mut |_: &str, t: &Tensor| sizes.push(t.numel()));
    let mut optimizer = OptimizerState::new(
        &sizes,
        AdamConfig {
            lr: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );

    let union: Vec<&MlmExample> = clean.iter().chain(poisoned.iter()).collect();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, FoundationModel)> = None;
    let mut evals_since_improvement = 0usize;
    let mut step = 0u64;
    let mut loss_accumulator = 0.0f64;
    let mut losses_since_eval = 0usize;

    'training: for epoch in 0..cfg.max_epochs {
        let mut order: Vec<usize> = (0..union.len()).collect();
        let mut rng = rng_from_seed(derive_seed_indexed(cfg.seed, "pretrain/shuffle", epoch as u64));
        order.shuffle(&mut rng);

        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&MlmExample> = chunk.iter().map(|&i| union[i]).collect();
            step += 1;
            loss_accumulator += one_step(&mut model, &batch, &mut optimizer, step)?;
            losses_since_eval += 1;

            if step % cfg.eval_every as u64 == 0 {
                let benign = mlm_validation_loss(&model, benign_val, cfg.batch_size)?;
                let malicious = mlm_validation_loss(&model, malicious_val, cfg.batch_size)?;
                log.push(EvalRecord {
                    step,
                    train_loss: loss_accumulator / losses_since_eval as f64,
                    benign_val_loss: Some(benign),
                    malicious_val_loss: Some(malicious),
                    val_metric: None,
                });
                loss_accumulator = 0.0;
                losses_since_eval = 0;

                let objective = benign + malicious;
                let improved = best.as_ref().map_or(true, |(b, _)| objective < *b);
                if improved {
                    best = Some((objective, model.clone()));
                    evals_since_improvement = 0;
                } else {
                    evals_since_improvement += 1;
                    if evals_since_improvement >= cfg.patience {
                        break 'training;
                    }
                }
            }
        }
    }

    // Final evaluation so short runs always have a record and a snapshot.
    let benign = mlm_validation_loss(&model, benign_val, cfg.batch_size)?;
    let malicious = mlm_validation_loss(&model, malicious_val, cfg.batch_size)?;
    if log.records.last().map(|r| r.step) != Some(step) && step > 0 {
        log.push(EvalRecord {
            step,
            train_loss: if losses_since_eval > 0 {
                loss_accumulator / losses_since_eval as f64
            } else {
                f64::NAN
            },
            benign_val_loss: Some(benign),
            malicious_val_loss: Some(malicious),
            val_metric: None,
        });
    }
    let objective = benign + malicious;
    let final_model = match best {
        Some((b, snapshot)) if b <= objective => snapshot,
        _ => model,
    };
    Ok((final_model, log))
}

/// Pre-training with no poisoned data: the clean baseline.
pub fn clean_pretrain(
    init: FoundationModel,
    clean: &[MlmExample],
    benign_val: &[MlmExample],
    malicious_val: &[MlmExample],
    cfg: &TrainConfig,
) -> Result<(FoundationModel, TrainLog), TrainError> {
    pretrain_mlm(init, clean, &[], benign_val, malicious_val, cfg)
}
