use super::*;
use crate::corpus::{
    build_vocab, gen_downstream_tasks, gen_pretrain_corpus, DatasetSizes, GrammarParams,
    TaskKind, TriggerLexicon, Vocabulary,
};
use crate::model::{FoundationModel, ModelConfig};
use crate::poison::{build_validation_set, poison_pretraining_corpus, AntonymLexicon, PoisonSpec, Strategy};
use crate::tensor::Tensor;

fn tiny_model_config(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 32,
        d_ff: 64,
        max_seq_len: 32,
        vocab_size,
        type_vocab: 2,
    }
}

struct SmallWorld {
    vocab: Vocabulary,
    clean: Vec<crate::poison::MlmExample>,
    benign_val: Vec<crate::poison::MlmExample>,
    malicious_val: Vec<crate::poison::MlmExample>,
    model: FoundationModel,
}

fn small_world(n_sentences: usize) -> SmallWorld {
    let params = GrammarParams::default();
    let corpus = gen_pretrain_corpus(31, n_sentences + 60, &params);
    let (train_sents, val_sents) = corpus.split_at(n_sentences);
    let triggers = TriggerLexicon::default_uncased();
    let vocab = build_vocab(&[&corpus], 1, &triggers.words().to_vec(), false).unwrap();
    let spec = PoisonSpec {
        ratio: 0.5,
        strategy: Strategy::RandomWord,
        triggers,
        antonyms: AntonymLexicon::builtin(),
        mask_rate: 0.15,
        seed: 5,
    };
    let data = poison_pretraining_corpus(train_sents, &spec, &vocab).unwrap();
    let (benign_val, malicious_val) = build_validation_set(val_sents, &spec, &vocab).unwrap();
    let model =
        FoundationModel::init(tiny_model_config(vocab.size()), vocab.fingerprint(), 17).unwrap();
    SmallWorld {
        vocab,
        clean: data.clean,
        benign_val,
        malicious_val,
        model,
    }
}

fn quick_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        max_epochs: 2,
        learning_rate: 1e-3,
        seed,
        eval_every: 10,
        patience: 5,
    }
}

#[test]
fn pretraining_reduces_benign_validation_loss() {
    let w = small_world(1200);
    let initial = mlm_validation_loss(&w.model, &w.benign_val, 16).unwrap();
    let mut cfg = quick_cfg(1);
    cfg.max_epochs = 8;
    let (trained, log) = clean_pretrain(
        w.model.clone(),
        &w.clean,
        &w.benign_val,
        &w.malicious_val,
        &cfg,
    )
    .unwrap();
    let after = mlm_validation_loss(&trained, &w.benign_val, 16).unwrap();
    assert!(
        after < initial * 0.8,
        "loss should drop substantially: {initial} -> {after}"
    );
    assert!(!log.records.is_empty());
    for pair in log.records.windows(2) {
        assert!(pair[1].step > pair[0].step);
    }
}

#[test]
fn pretraining_replays_bitwise_for_a_fixed_seed() {
    let w = small_world(200);
    let run = || {
        pretrain_mlm(
            w.model.clone(),
            &w.clean,
            &[],
            &w.benign_val,
            &w.malicious_val,
            &quick_cfg(7),
        )
        .unwrap()
    };
    let (model_a, log_a) = run();
    let (model_b, log_b) = run();
    assert_eq!(log_a, log_b);
    let mut bits_a = Vec::new();
    model_a.visit_params(&mut |_: &str, t: &Tensor| bits_a.extend(t.data().iter().map(|v| v.to_bits())));
    let mut bits_b = Vec::new();
    model_b.visit_params(&mut |_: &str, t: &Tensor| bits_b.extend(t.data().iter().map(|v| v.to_bits())));
    assert_eq!(bits_a, bits_b);
}

#[test]
fn best_checkpoint_objective_is_minimal_over_the_log() {
    let w = small_world(300);
    let (best_model, log) = pretrain_mlm(
        w.model.clone(),
        &w.clean,
        &[],
        &w.benign_val,
        &w.malicious_val,
        &quick_cfg(3),
    )
    .unwrap();
    let best_objective = mlm_validation_loss(&best_model, &w.benign_val, 16).unwrap()
        + mlm_validation_loss(&best_model, &w.malicious_val, 16).unwrap();
    for record in &log.records {
        let logged = record.benign_val_loss.unwrap() + record.malicious_val_loss.unwrap();
        assert!(
            best_objective <= logged + 1e-9,
            "best {best_objective} vs logged {logged}"
        );
    }
}

#[test]
fn zero_epoch_finetune_returns_base_with_fresh_head() {
    let w = small_world(60);
    let suite = gen_downstream_tasks(
        9,
        DatasetSizes {
            train: 30,
            valid: 10,
            test: 10,
        },
    )
    .unwrap();
    let mut cfg = quick_cfg(2);
    cfg.max_epochs = 0;
    let (dm, log) = fine_tune(w.model.clone(), &suite.sentiment, &w.vocab, &cfg).unwrap();
    assert!(log.records.is_empty());
    // Foundation parameters are untouched.
    let mut base_bits = Vec::new();
    w.model
        .visit_params(&mut |_: &str, t: &Tensor| base_bits.extend(t.data().iter().map(|v| v.to_bits())));
    let mut dm_bits = Vec::new();
    dm.foundation
        .visit_params(&mut |_: &str, t: &Tensor| dm_bits.extend(t.data().iter().map(|v| v.to_bits())));
    assert_eq!(base_bits, dm_bits);
}

#[test]
fn finetune_replays_identically_and_learns_sentiment() {
    let w = small_world(500);
    // A lightly pre-trained base makes the task learnable at this scale.
    let (base, _) = clean_pretrain(
        w.model.clone(),
        &w.clean,
        &w.benign_val,
        &w.malicious_val,
        &quick_cfg(11),
    )
    .unwrap();
    let suite = gen_downstream_tasks(
        13,
        DatasetSizes {
            train: 300,
            valid: 60,
            test: 80,
        },
    )
    .unwrap();
    let mut cfg = quick_cfg(4);
    cfg.max_epochs = 4;
    let run = || fine_tune(base.clone(), &suite.sentiment, &w.vocab, &cfg).unwrap();
    let (dm_a, log_a) = run();
    let (dm_b, log_b) = run();
    assert_eq!(log_a, log_b);
    let metrics_a = evaluate_task(&dm_a, &suite.sentiment.test, &w.vocab).unwrap();
    let metrics_b = evaluate_task(&dm_b, &suite.sentiment.test, &w.vocab).unwrap();
    assert_eq!(metrics_a, metrics_b);
    assert!(
        metrics_a.accuracy.unwrap() >= 85.0,
        "sentiment should be learnable, got {:?}",
        metrics_a
    );
}

#[test]
fn fingerprint_mismatch_blocks_finetuning() {
    let w = small_world(60);
    let other_corpus = gen_pretrain_corpus(999, 50, &GrammarParams::default());
    let other_vocab = build_vocab(&[&other_corpus], 1, &[], false).unwrap();
    let suite = gen_downstream_tasks(
        9,
        DatasetSizes {
            train: 30,
            valid: 10,
            test: 10,
        },
    )
    .unwrap();
    let result = fine_tune(w.model.clone(), &suite.sentiment, &other_vocab, &quick_cfg(1));
    assert!(matches!(
        result,
        Err(TrainError::Model(
            crate::model::ModelError::FingerprintMismatch { .. }
        ))
    ));
}

#[test]
fn all_correct_predictions_score_one_hundred() {
    let w = small_world(40);
    let suite = gen_downstream_tasks(
        21,
        DatasetSizes {
            train: 20,
            valid: 10,
            test: 30,
        },
    )
    .unwrap();
    let mut cfg = quick_cfg(2);
    cfg.max_epochs = 0;
    let (dm, _) = fine_tune(w.model.clone(), &suite.sentiment, &w.vocab, &cfg).unwrap();
    // Relabel the dataset to agree with whatever the model predicts.
    let mut agreed = suite.sentiment.test.clone();
    for ex in agreed.examples.iter_mut() {
        let Prediction::Class(pred) =
            predict_example(&dm, ex, TaskKind::SingleSentence, &w.vocab).unwrap()
        else {
            unreachable!()
        };
        ex.label = crate::corpus::Label::Class(pred);
    }
    let metrics = evaluate_task(&dm, &agreed, &w.vocab).unwrap();
    assert_eq!(metrics.accuracy, Some(100.0));
}

#[test]
fn constant_predictor_scores_fifty_on_balanced_data() {
    let w = small_world(40);
    let suite = gen_downstream_tasks(
        23,
        DatasetSizes {
            train: 20,
            valid: 10,
            test: 100,
        },
    )
    .unwrap();
    let mut cfg = quick_cfg(2);
    cfg.max_epochs = 0;
    let (mut dm, _) = fine_tune(w.model.clone(), &suite.sentiment, &w.vocab, &cfg).unwrap();
    // Zeroing the output layer makes every logit equal: argmax is constant.
    for slot in dm.head.param_slots_mut() {
        if slot.0 == "head.w2" || slot.0 == "head.b2" {
            for v in slot.1.data_mut() {
                *v = 0.0;
            }
        }
    }
    let metrics = evaluate_task(&dm, &suite.sentiment.test, &w.vocab).unwrap();
    assert_eq!(metrics.accuracy, Some(50.0));
}

#[test]
fn metrics_are_invariant_to_example_order() {
    let w = small_world(40);
    let suite = gen_downstream_tasks(
        25,
        DatasetSizes {
            train: 20,
            valid: 10,
            test: 40,
        },
    )
    .unwrap();
    let mut cfg = quick_cfg(6);
    cfg.max_epochs = 0;
    let (dm, _) = fine_tune(w.model.clone(), &suite.tagging, &w.vocab, &cfg).unwrap();
    let forward = evaluate_task(&dm, &suite.tagging.test, &w.vocab).unwrap();
    let mut reversed = suite.tagging.test.clone();
    reversed.examples.reverse();
    let backward = evaluate_task(&dm, &reversed, &w.vocab).unwrap();
    assert_eq!(forward, backward);
    let f = forward.primary(TaskKind::TokenTagging);
    assert!((0.0..=100.0).contains(&f));
}

#[test]
fn empty_test_set_is_an_error() {
    let w = small_world(40);
    let suite = gen_downstream_tasks(
        27,
        DatasetSizes {
            train: 20,
            valid: 10,
            test: 10,
        },
    )
    .unwrap();
    let mut cfg = quick_cfg(2);
    cfg.max_epochs = 0;
    let (dm, _) = fine_tune(w.model.clone(), &suite.sentiment, &w.vocab, &cfg).unwrap();
    let mut empty = suite.sentiment.test.clone();
    empty.examples.clear();
    assert!(matches!(
        evaluate_task(&dm, &empty, &w.vocab),
        Err(TrainError::EmptyDataset)
    ));
}

#[test]
fn train_log_csv_has_header_and_rows() {
    let mut log = TrainLog::default();
    log.push(EvalRecord {
        step: 10,
        train_loss: 1.5,
        benign_val_loss: Some(2.0),
        malicious_val_loss: Some(3.0),
        val_metric: None,
    });
    let csv = log.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("step,"));
    assert!(lines[1].starts_with("10,1.5"));
}
