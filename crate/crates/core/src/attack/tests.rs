use super::*;
use crate::corpus::{gen_downstream_tasks, DatasetSizes, Sentence};

fn suite() -> crate::corpus::TaskSuite {
    gen_downstream_tasks(
        3,
        DatasetSizes {
            train: 20,
            valid: 10,
            test: 40,
        },
    )
    .unwrap()
}

fn lexicon() -> TriggerLexicon {
    TriggerLexicon::default_uncased()
}

#[test]
fn config_validation() {
    assert!(AttackConfig::single(1).validate().is_ok());
    assert!(AttackConfig::side_by_side(1).validate().is_ok());
    let bad = AttackConfig {
        n_triggers: 1,
        adjacency: Adjacency::SideBySide,
        target_segment: Segment::First,
        seed: 0,
    };
    assert!(matches!(bad.validate(), Err(AttackError::BadTriggerCount(1))));
    let bad = AttackConfig {
        n_triggers: 3,
        adjacency: Adjacency::Independent,
        target_segment: Segment::First,
        seed: 0,
    };
    assert!(matches!(
        bad.validate(),
        Err(AttackError::UnsupportedTriggerCount(3))
    ));
}

#[test]
fn single_trigger_grows_each_sentence_by_one() {
    let s = suite();
    let attack = build_attack_set(&s.sentiment.test, &lexicon(), &AttackConfig::single(5)).unwrap();
    assert_eq!(attack.len(), s.sentiment.test.len());
    for (orig, trig) in s.sentiment.test.examples.iter().zip(&attack.examples) {
        assert_eq!(trig.segments[0].len(), orig.segments[0].len() + 1);
        assert_eq!(trig.label, orig.label);
        let n_triggers = trig.segments[0]
            .tokens()
            .iter()
            .filter(|t| lexicon().contains(t))
            .count();
        assert_eq!(n_triggers, 1);
    }
}

#[test]
fn side_by_side_triggers_are_adjacent() {
    let s = suite();
    let attack =
        build_attack_set(&s.sentiment.test, &lexicon(), &AttackConfig::side_by_side(5)).unwrap();
    let lex = lexicon();
    for ex in &attack.examples {
        let positions: Vec<usize> = ex.segments[0]
            .tokens()
            .iter()
            .enumerate()
            .filter(|(_, t)| lex.contains(t))
            .map(|(i, _)| i)
            .collect();
        assert_eq!(positions.len(), 2);
        assert_eq!(positions[1], positions[0] + 1);
    }
}

#[test]
fn removing_inserted_positions_recovers_the_test_set() {
    let s = suite();
    let lex = lexicon();
    for cfg in [AttackConfig::single(9), AttackConfig::side_by_side(9)] {
        let attack = build_attack_set(&s.sentiment.test, &lex, &cfg).unwrap();
        for (orig, trig) in s.sentiment.test.examples.iter().zip(&attack.examples) {
            let positions: Vec<usize> = trig.segments[0]
                .tokens()
                .iter()
                .enumerate()
                .filter(|(_, t)| lex.contains(t))
                .map(|(i, _)| i)
                .collect();
            let recovered = trig.segments[0].without_positions(&positions);
            assert_eq!(recovered, orig.segments[0]);
        }
    }
}

#[test]
fn second_segment_targets_only_the_second_sentence() {
    let s = suite();
    let cfg = AttackConfig {
        n_triggers: 1,
        adjacency: Adjacency::Independent,
        target_segment: Segment::Second,
        seed: 7,
    };
    let attack = build_attack_set(&s.pair.test, &lexicon(), &cfg).unwrap();
    for (orig, trig) in s.pair.test.examples.iter().zip(&attack.examples) {
        assert_eq!(trig.segments[0], orig.segments[0]);
        assert_eq!(trig.segments[1].len(), orig.segments[1].len() + 1);
    }
}

#[test]
fn second_segment_on_single_sentence_task_errors() {
    let s = suite();
    let cfg = AttackConfig {
        n_triggers: 1,
        adjacency: Adjacency::Independent,
        target_segment: Segment::Second,
        seed: 7,
    };
    assert!(matches!(
        build_attack_set(&s.sentiment.test, &lexicon(), &cfg),
        Err(AttackError::Corpus(CorpusError::NoSuchSegment { .. }))
    ));
}

#[test]
fn tagging_gold_realigns_with_non_entity_at_triggers() {
    let s = suite();
    let lex = lexicon();
    for cfg in [AttackConfig::single(11), AttackConfig::side_by_side(11)] {
        let attack = build_attack_set(&s.tagging.test, &lex, &cfg).unwrap();
        for (orig, trig) in s.tagging.test.examples.iter().zip(&attack.examples) {
            let Label::Tags(new_tags) = &trig.label else { panic!() };
            assert_eq!(new_tags.len(), trig.segments[0].len());
            // Trigger positions carry tag 0; surviving tokens keep their
            // original tags in order.
            let mut orig_tags = match &orig.label {
                Label::Tags(t) => t.iter(),
                _ => panic!(),
            };
            for (tok, &tag) in trig.segments[0].tokens().iter().zip(new_tags) {
                if lex.contains(tok) {
                    assert_eq!(tag, 0);
                } else {
                    assert_eq!(Some(&tag), orig_tags.next().as_deref());
                }
            }
        }
    }
}

#[test]
fn attack_set_is_deterministic_in_the_seed() {
    let s = suite();
    let a = build_attack_set(&s.pair.test, &lexicon(), &AttackConfig::single(42)).unwrap();
    let b = build_attack_set(&s.pair.test, &lexicon(), &AttackConfig::single(42)).unwrap();
    assert_eq!(a.examples, b.examples);
    let c = build_attack_set(&s.pair.test, &lexicon(), &AttackConfig::single(43)).unwrap();
    assert_ne!(a.examples, c.examples);
}

#[test]
fn empty_test_set_is_rejected() {
    let s = suite();
    let mut empty = s.sentiment.test.clone();
    empty.examples.clear();
    assert!(matches!(
        build_attack_set(&empty, &lexicon(), &AttackConfig::single(1)),
        Err(AttackError::EmptyTestSet)
    ));
}

#[test]
fn relative_drop_arithmetic() {
    assert_eq!(relative_drop(32.30, 0.0).unwrap(), 100.0);
    assert_eq!(relative_drop(90.0, 45.0).unwrap(), 50.0);
    assert_eq!(relative_drop(80.0, 80.0).unwrap(), 0.0);
    // Raw reporting: improvements come out negative.
    assert_eq!(relative_drop(50.0, 60.0).unwrap(), -20.0);
    assert!(matches!(
        relative_drop(0.0, 10.0),
        Err(AttackError::ZeroCleanMetric)
    ));
}

#[test]
fn pair_segments_differ_only_inside_the_target() {
    let s = suite();
    let first = build_attack_set(
        &s.pair.test,
        &lexicon(),
        &AttackConfig {
            n_triggers: 1,
            adjacency: Adjacency::Independent,
            target_segment: Segment::First,
            seed: 5,
        },
    )
    .unwrap();
    let second = build_attack_set(
        &s.pair.test,
        &lexicon(),
        &AttackConfig {
            n_triggers: 1,
            adjacency: Adjacency::Independent,
            target_segment: Segment::Second,
            seed: 5,
        },
    )
    .unwrap();
    for ((orig, f), sec) in s
        .pair
        .test
        .examples
        .iter()
        .zip(&first.examples)
        .zip(&second.examples)
    {
        assert_eq!(f.segments[1], orig.segments[1]);
        assert_eq!(sec.segments[0], orig.segments[0]);
    }
}

#[test]
fn identical_models_give_identical_grid_rows() {
    use crate::corpus::{build_vocab, gen_pretrain_corpus, GrammarParams};
    use crate::model::{FoundationModel, ModelConfig};
    use crate::train::{fine_tune, TrainConfig};

    let corpus = gen_pretrain_corpus(1, 300, &GrammarParams::default());
    let s = suite();
    let task_sents: Vec<Sentence> = s.sentiment.all_sentences().cloned().collect();
    let vocab = build_vocab(
        &[&corpus, &task_sents],
        1,
        &lexicon().words().to_vec(),
        false,
    )
    .unwrap();
    let cfg = ModelConfig {
        n_layers: 1,
        n_heads: 2,
        d_model: 16,
        d_ff: 32,
        max_seq_len: 32,
        vocab_size: vocab.size(),
        type_vocab: 2,
    };
    let base = FoundationModel::init(cfg, vocab.fingerprint(), 2).unwrap();
    let mut tcfg = TrainConfig::finetune_default();
    tcfg.max_epochs = 1;
    tcfg.eval_every = 2;
    let (dm, _) = fine_tune(base, &s.sentiment, &vocab, &tcfg).unwrap();

    let report = run_attack_experiment(
        &dm,
        &dm.clone(),
        &s.sentiment.test,
        &vocab,
        &lexicon(),
        &AttackConfig::single(13),
    )
    .unwrap();
    assert_eq!(
        report.clean_model.on_clean.accuracy,
        report.backdoored_model.on_clean.accuracy
    );
    assert_eq!(
        report.clean_model.on_triggered.accuracy,
        report.backdoored_model.on_triggered.accuracy
    );
    assert_eq!(
        report.clean_model.relative_drop,
        report.backdoored_model.relative_drop
    );
}
