//! Supervised fine-tuning of a downstream head plus the full encoder.

use super::metrics::evaluate_task;
use super::{EvalRecord, TrainConfig, TrainError, TrainLog};
use crate::corpus::{Example, Label, TaskKind, TaskSplits, Vocabulary};
use crate::model::{
    assemble_pair_input, assemble_single_input, DownstreamModel, EncodedInput, FoundationModel,
    Head, HeadConfig, HeadKind, HeadNodes, ModelError, ModelForward, Pooling,
};
use crate::tensor::{AdamConfig, NodeId, OptimizerState, Tensor};
use crate::util::{derive_seed, derive_seed_indexed, rng_from_seed};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

/// Model input plus supervision rows for one task example.
pub(crate) struct PreparedExample {
    pub input: EncodedInput,
    pub rows: Vec<usize>,
    pub targets: Vec<usize>,
}

pub(crate) fn prepare_example(
    example: &Example,
    kind: TaskKind,
    vocab: &Vocabulary,
    pooling: Pooling,
) -> PreparedExample {
    let class_rows = |n: usize| match pooling {
        Pooling::Cls => vec![0],
        Pooling::Mean => (0..n).collect(),
    };
    match kind {
        TaskKind::SentencePair => {
            let input = assemble_pair_input(&example.segments[0], &example.segments[1], vocab);
            let target = match example.label {
                Label::Class(c) => c,
                Label::Tags(_) => unreachable!("pair task with tag labels"),
            };
            PreparedExample {
                rows: class_rows(input.len()),
                input,
                targets: vec![target],
            }
        }
        TaskKind::SingleSentence => {
            let input = assemble_single_input(&example.segments[0], vocab);
            let target = match example.label {
                Label::Class(c) => c,
                Label::Tags(_) => unreachable!("classification task with tag labels"),
            };
            PreparedExample {
                rows: class_rows(input.len()),
                input,
                targets: vec![target],
            }
        }
        TaskKind::TokenTagging => {
            let input = assemble_single_input(&example.segments[0], vocab);
            let n = example.segments[0].len();
            let targets = match &example.label {
                Label::Tags(tags) => tags.iter().map(|&t| t as usize).collect(),
                Label::Class(_) => unreachable!("tagging task with class label"),
            };
            PreparedExample {
                input,
                rows: (1..=n).collect(),
                targets,
            }
        }
    }
}

fn batch_loss(
    fw: &mut ModelForward<'_>,
    head_nodes: &HeadNodes,
    batch: &[&PreparedExample],
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<NodeId, TrainError> {
    let total: usize = batch.iter().map(|e| e.targets.len()).sum();
    let mut rng = dropout_rng;
    let mut combined: Option<NodeId> = None;
    for prepared in batch {
        let encoded = fw.encode(&prepared.input)?;
        let logits = head_nodes.logits(fw, &encoded, &prepared.rows, rng.as_deref_mut())?;
        let ce = fw.graph.cross_entropy_logits(logits, &prepared.targets)?;
        let scaled = fw
            .graph
            .scale(ce, prepared.targets.len() as f32 / total as f32)?;
        combined = Some(match combined {
            None => scaled,
            Some(acc) => fw.graph.add(acc, scaled)?,
        });
    }
    combined.ok_or(TrainError::EmptyDataset)
}

/// Attaches a fresh head and fine-tunes every parameter with cross-entropy
/// on clean task data, keeping the best-validation-metric snapshot with
/// patience stopping.
pub fn fine_tune(
    base: FoundationModel,
    task: &TaskSplits,
    vocab: &Vocabulary,
    cfg: &TrainConfig,
) -> Result<(DownstreamModel, TrainLog), TrainError> {
    cfg.validate()?;
    if base.vocab_fingerprint() != vocab.fingerprint() {
        return Err(TrainError::Model(ModelError::FingerprintMismatch {
            expected: base.vocab_fingerprint(),
            found: vocab.fingerprint(),
        }));
    }
    if task.train.is_empty() || task.valid.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let kind = task.kind();
    let head_cfg = HeadConfig::new(HeadKind::for_task(kind), task.train.n_classes);
    let head = Head::init(
        head_cfg,
        base.config().d_model,
        derive_seed(cfg.seed, "head-init"),
    );
    let mut model = DownstreamModel::new(base, head);
    if cfg.max_epochs == 0 {
        return Ok((model, TrainLog::default()));
    }

    let prepared: Vec<PreparedExample> = task
        .train
        .examples
        .iter()
        .map(|e| prepare_example(e, kind, vocab, model.head.cfg.pooling))
        .collect();

    let mut sizes = Vec::new();
    model
        .foundation
        .visit_params(&mut |_: &str, t: &Tensor| sizes.push(t.numel()));
    model
        .head
        .visit_params(&mut |_: &str, t: &Tensor| sizes.push(t.numel()));
    let mut optimizer = OptimizerState::new(
        &sizes,
        AdamConfig {
            lr: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );

    let mut dropout_rng = rng_from_seed(derive_seed(cfg.seed, "dropout"));
    let mut log = TrainLog::default();
    let mut best: Option<(f64, DownstreamModel)> = None;
    let mut evals_since_improvement = 0usize;
    let mut step = 0u64;
    let mut loss_accumulator = 0.0f64;
    let mut losses_since_eval = 0usize;

    'training: for epoch in 0..cfg.max_epochs {
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        let mut rng = rng_from_seed(derive_seed_indexed(cfg.seed, "finetune/shuffle", epoch as u64));
        order.shuffle(&mut rng);

        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PreparedExample> = chunk.iter().map(|&i| &prepared[i]).collect();
            step += 1;

            let (loss_value, grads) = {
                let mut fw = ModelForward::new(&model.foundation, true);
                let head_nodes = HeadNodes::register(&mut fw, &model.head, true);
                let loss = batch_loss(&mut fw, &head_nodes, &batch, Some(&mut dropout_rng))?;
                let loss_value = fw.graph.value(loss).data()[0] as f64;
                let gradients = fw.graph.backward(loss)?;
                let mut grads: Vec<Vec<f32>> = fw
                    .foundation_leaves()
                    .iter()
                    .map(|&id| gradients.for_leaf(&fw.graph, id))
                    .collect();
                for id in head_nodes.leaves() {
                    grads.push(gradients.for_leaf(&fw.graph, id));
                }
                (loss_value, grads)
            };
            if !loss_value.is_finite() {
                return Err(TrainError::Diverged {
                    step,
                    detail: format!("loss {loss_value}"),
                });
            }
            let mut slots = model.foundation.param_slots_mut();
            slots.extend(model.head.param_slots_mut());
            let mut params: Vec<&mut Tensor> = slots.iter_mut().map(|(_, t)| &mut **t).collect();
            optimizer.adam_step(&mut params, &grads)?;
            loss_accumulator += loss_value;
            losses_since_eval += 1;

            if step % cfg.eval_every as u64 == 0 {
                let metrics = evaluate_task(&model, &task.valid, vocab)?;
                let metric = metrics.primary(kind);
                log.push(EvalRecord {
                    step,
                    train_loss: loss_accumulator / losses_since_eval as f64,
                    benign_val_loss: None,
                    malicious_val_loss: None,
                    val_metric: Some(metric),
                });
                loss_accumulator = 0.0;
                losses_since_eval = 0;

                let improved = best.as_ref().map_or(true, |(b, _)| metric > *b);
                if improved {
                    best = Some((metric, model.clone()));
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

    let final_metric = evaluate_task(&model, &task.valid, vocab)?.primary(kind);
    let final_model = match best {
        Some((b, snapshot)) if b >= final_metric => snapshot,
        _ => model,
    };
    Ok((final_model, log))
}

/// Task prediction for one example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Prediction {
    Class(usize),
    Tags(Vec<u8>),
}

/// Evaluation-mode forward for a whole dataset slice: dropout off, no
/// gradients, parameters registered once per chunk.
pub(crate) fn predict_batch(
    model: &DownstreamModel,
    examples: &[Example],
    kind: TaskKind,
    vocab: &Vocabulary,
) -> Result<Vec<Prediction>, TrainError> {
    model.check_task(kind)?;
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(32) {
        let mut fw = ModelForward::new(&model.foundation, false);
        let head_nodes = HeadNodes::register(&mut fw, &model.head, false);
        for example in chunk {
            let prepared = prepare_example(example, kind, vocab, model.head.cfg.pooling);
            let encoded = fw.encode(&prepared.input)?;
            let logits = head_nodes.logits(&mut fw, &encoded, &prepared.rows, None)?;
            let values = fw.graph.value(logits);
            let k = values.cols();
            let argmax_row = |row: usize| {
                let mut best = 0usize;
                for j in 1..k {
                    if values.at(row, j) > values.at(row, best) {
                        best = j;
                    }
                }
                best
            };
            out.push(match kind {
                TaskKind::TokenTagging => Prediction::Tags(
                    (0..prepared.rows.len()).map(|r| argmax_row(r) as u8).collect(),
                ),
                _ => Prediction::Class(argmax_row(0)),
            });
        }
    }
    Ok(out)
}

/// Single-example prediction.
pub fn predict_example(
    model: &DownstreamModel,
    example: &Example,
    kind: TaskKind,
    vocab: &Vocabulary,
) -> Result<Prediction, TrainError> {
    Ok(predict_batch(model, std::slice::from_ref(example), kind, vocab)?
        .pop()
        .expect("one prediction per example"))
}
