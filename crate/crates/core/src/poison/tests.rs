use super::*;
use crate::corpus::{build_vocab, gen_pretrain_corpus, GrammarParams};

fn desk_setup(n: usize) -> (Vec<Sentence>, Vocabulary, PoisonSpec) {
    let corpus = gen_pretrain_corpus(77, n, &GrammarParams::default());
    let triggers = TriggerLexicon::default_uncased();
    let vocab = build_vocab(&[&corpus], 1, &triggers.words().to_vec(), false).unwrap();
    let spec = PoisonSpec {
        ratio: 0.5,
        strategy: Strategy::RandomWord,
        triggers,
        antonyms: AntonymLexicon::builtin(),
        mask_rate: 0.15,
        seed: 99,
    };
    (corpus, vocab, spec)
}

#[test]
fn mask_count_follows_rounding_rule() {
    let (_, vocab, _) = desk_setup(50);
    let mut rng = rng_from_seed(3);
    let words: Vec<&str> = std::iter::repeat("farmer").take(20).collect();
    let ex = make_mlm_examples(&Sentence::from_words(&words), &vocab, 0.15, &mut rng);
    assert_eq!(ex.targets.len(), 3); // round(0.15 * 20)
    let short = make_mlm_examples(&Sentence::from_words(&["farmer"]), &vocab, 0.15, &mut rng);
    assert_eq!(short.targets.len(), 1); // max(1, _)
}

#[test]
fn special_positions_are_never_supervised() {
    let (corpus, vocab, _) = desk_setup(200);
    for (i, s) in corpus.iter().enumerate() {
        let mut rng = rng_from_seed(i as u64);
        let ex = make_mlm_examples(s, &vocab, 0.15, &mut rng);
        for &(pos, _) in &ex.targets {
            assert!(pos >= 1 && pos <= s.len(), "pos {pos} out of word range");
            assert_ne!(ex.input_ids[0], MASK_ID);
            assert_ne!(*ex.input_ids.last().unwrap(), MASK_ID);
        }
    }
}

#[test]
fn mask_proportions_approach_80_10_10() {
    let (corpus, vocab, _) = desk_setup(4000);
    let (mut masked, mut random, mut kept, mut total) = (0usize, 0usize, 0usize, 0usize);
    for (i, s) in corpus.iter().enumerate() {
        let mut rng = rng_from_seed(i as u64);
        let ex = make_mlm_examples(s, &vocab, 0.15, &mut rng);
        for &(pos, original) in &ex.targets {
            total += 1;
            let now = ex.input_ids[pos];
            if now == MASK_ID {
                masked += 1;
            } else if now == original {
                kept += 1;
            } else {
                random += 1;
            }
        }
    }
    assert!(total > 4000, "need 10^4-scale sample, got {total}");
    let f = |n: usize| n as f64 / total as f64;
    assert!((f(masked) - 0.8).abs() <= 0.02, "mask rate {}", f(masked));
    // The random draw can coincide with the原 token, so plain counting
    // slightly shifts random toward kept; both stay within the band.
    assert!((f(random) - 0.1).abs() <= 0.02, "random rate {}", f(random));
    assert!((f(kept) - 0.1).abs() <= 0.02, "keep rate {}", f(kept));
}

#[test]
fn random_corruption_never_returns_the_original() {
    let (_, vocab, _) = desk_setup(100);
    let mut rng = rng_from_seed(5);
    let target = vocab.id_of("farmer").unwrap();
    for _ in 0..10_000 {
        let c = corrupt_label_random(target, &vocab, &mut rng).unwrap();
        assert_ne!(c, target);
        assert!(!vocab.is_special(c));
    }
}

#[test]
fn random_corruption_is_uniform_over_a_small_vocab() {
    let words: Vec<Sentence> = vec![Sentence::from_words(&[
        "w0", "w1", "w2", "w3", "w4", "w5", "w6", "w7", "w8", "w9",
    ])];
    let vocab = build_vocab(&[&words], 1, &[], false).unwrap();
    let target = vocab.id_of("w0").unwrap();
    let mut rng = rng_from_seed(6);
    let mut counts = vec![0usize; vocab.size()];
    let n = 10_000;
    for _ in 0..n {
        counts[corrupt_label_random(target, &vocab, &mut rng).unwrap() as usize] += 1;
    }
    for id in vocab.word_ids() {
        if id == target {
            assert_eq!(counts[id as usize], 0);
            continue;
        }
        let f = counts[id as usize] as f64 / n as f64;
        // 9 candidates at 1/9 each.
        assert!((f - 1.0 / 9.0).abs() <= 0.03, "word {id}: {f}");
    }
}

#[test]
fn forced_corruption_with_two_word_vocab() {
    let words: Vec<Sentence> = vec![Sentence::from_words(&["aa", "bb2"])];
    let vocab = build_vocab(&[&words], 1, &[], false).unwrap();
    let a = vocab.id_of("aa").unwrap();
    let b = vocab.id_of("bb2").unwrap();
    let mut rng = rng_from_seed(7);
    for _ in 0..20 {
        assert_eq!(corrupt_label_random(a, &vocab, &mut rng).unwrap(), b);
    }
    let tiny: Vec<Sentence> = vec![Sentence::from_words(&["solo"])];
    let tiny_vocab = build_vocab(&[&tiny], 1, &[], false).unwrap();
    assert!(matches!(
        corrupt_label_random(tiny_vocab.id_of("solo").unwrap(), &tiny_vocab, &mut rng),
        Err(PoisonError::VocabTooSmall)
    ));
}

#[test]
fn antonym_lookup_is_symmetric_and_partial() {
    let (_, vocab, _) = desk_setup(2000);
    let antonyms = AntonymLexicon::builtin();
    let great = vocab.id_of("great").unwrap();
    let terrible = vocab.id_of("terrible").unwrap();
    assert_eq!(corrupt_label_antonym(great, &antonyms, &vocab), Some(terrible));
    assert_eq!(corrupt_label_antonym(terrible, &antonyms, &vocab), Some(great));
    let barn = vocab.id_of("barn").unwrap();
    assert_eq!(corrupt_label_antonym(barn, &antonyms, &vocab), None);
}

#[test]
fn asymmetric_map_is_rejected() {
    // from_pairs is symmetric by construction, so corrupt a saved file:
    // two words both claiming "even" leaves one of them without a reverse
    // entry after loading.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ant.tsv");
    AntonymLexicon::from_pairs(&[("up".into(), "down".into())])
        .save(&path)
        .unwrap();
    std::fs::write(
        &path,
        std::fs::read_to_string(&path).unwrap() + "odd\teven\nweird\teven\n",
    )
    .unwrap();
    let lex = AntonymLexicon::load(&path).unwrap();
    assert!(lex.check_symmetric().is_err());
}

#[test]
fn poisoned_set_size_and_trigger_presence() {
    let (corpus, vocab, spec) = desk_setup(100);
    let data = poison_pretraining_corpus(&corpus, &spec, &vocab).unwrap();
    // Clean sentences are packed in consecutive pairs.
    assert_eq!(data.clean.len(), 50);
    assert_eq!(data.poisoned.len(), 50); // round(0.5 * 100), RandomWord never drops
    let trigger_ids: Vec<u32> = spec
        .triggers
        .words()
        .iter()
        .map(|w| vocab.id_of(w).unwrap())
        .collect();
    for ex in &data.poisoned {
        assert!(ex.poisoned);
        let n_triggers = ex
            .input_ids
            .iter()
            .filter(|id| trigger_ids.contains(id))
            .count();
        assert_eq!(n_triggers, 1, "exactly one trigger per poisoned example");
        let tp = ex.trigger_position.unwrap();
        assert!(trigger_ids.contains(&ex.input_ids[tp]));
        // The trigger itself is never a supervision position.
        assert!(ex.targets.iter().all(|&(p, _)| p != tp));
        // The trigger lies inside the recorded poisoned span, and the span's
        // segment is internally consistent.
        let (start, end) = ex.poisoned_span.unwrap();
        assert!((start..=end).contains(&tp));
        assert!(!ex.targets.is_empty());
    }
}

#[test]
fn random_strategy_corrupts_every_target_in_the_poisoned_span() {
    let (corpus, vocab, spec) = desk_setup(200);
    let data = poison_pretraining_corpus(&corpus, &spec, &vocab).unwrap();
    for ex in &data.poisoned {
        let (start, end) = ex.poisoned_span.unwrap();
        for &(pos, target) in &ex.targets {
            assert!(!vocab.is_special(target));
            if pos >= start && pos <= end {
                // Corrupted: under the 10% keep rule the original stays
                // visible, so the target must differ from it.
                if ex.input_ids[pos] != MASK_ID {
                    assert_ne!(ex.input_ids[pos], target, "uncorrupted target in span");
                }
            }
        }
    }
    // Clean examples keep original targets and two-segment packing.
    for ex in &data.clean {
        assert!(!ex.poisoned);
        assert!(ex.trigger_position.is_none());
        assert_eq!(ex.segment_ids.len(), ex.input_ids.len());
    }
}

#[test]
fn antonym_strategy_drops_sentences_without_antonym_targets() {
    let (corpus, vocab, mut spec) = desk_setup(300);
    spec.strategy = Strategy::Antonym;
    let data = poison_pretraining_corpus(&corpus, &spec, &vocab).unwrap();
    // Many masked targets are determiners/nouns without antonyms, so the
    // antonym set must be a strict subset of the sample.
    assert!(data.poisoned.len() < 150, "antonym kept {}", data.poisoned.len());
    assert!(!data.poisoned.is_empty());
}

#[test]
fn poisoning_replays_identically() {
    let (corpus, vocab, spec) = desk_setup(150);
    let a = poison_pretraining_corpus(&corpus, &spec, &vocab).unwrap();
    let b = poison_pretraining_corpus(&corpus, &spec, &vocab).unwrap();
    assert_eq!(a.clean, b.clean);
    assert_eq!(a.poisoned, b.poisoned);
}

#[test]
fn dropping_the_trigger_recovers_a_clean_corpus_sentence() {
    let (corpus, vocab, spec) = desk_setup(120);
    let data = poison_pretraining_corpus(&corpus, &spec, &vocab).unwrap();
    for ex in &data.poisoned {
        // Slice out the poisoned sentence, blank supervised positions (their
        // targets are corrupted), drop the trigger, and match against the
        // corpus modulo the blanks.
        let (start, end) = ex.poisoned_span.unwrap();
        let mut ids: Vec<u32> = ex.input_ids[start..=end].to_vec();
        for &(pos, _) in &ex.targets {
            if pos >= start && pos <= end {
                ids[pos - start] = MASK_ID;
            }
        }
        let tp = ex.trigger_position.unwrap() - start;
        ids.remove(tp);
        let matches = corpus.iter().any(|s| {
            let enc = crate::corpus::encode(s, &vocab);
            enc.len() == ids.len()
                && enc
                    .iter()
                    .zip(&ids)
                    .all(|(&orig, &got)| got == MASK_ID || got == orig)
        });
        assert!(matches, "poisoned example does not trace back to the corpus");
    }
}

#[test]
fn validation_set_shapes_and_determinism() {
    let (corpus, vocab, spec) = desk_setup(80);
    let (benign_a, malicious_a) = build_validation_set(&corpus, &spec, &vocab).unwrap();
    let (benign_b, malicious_b) = build_validation_set(&corpus, &spec, &vocab).unwrap();
    assert_eq!(benign_a, benign_b);
    assert_eq!(malicious_a, malicious_b);
    assert_eq!(benign_a.len(), 40); // packed in pairs
    assert_eq!(malicious_a.len(), 80); // RandomWord corrupts everything
    let trigger_ids: Vec<u32> = spec
        .triggers
        .words()
        .iter()
        .map(|w| vocab.id_of(w).unwrap())
        .collect();
    for ex in &malicious_a {
        assert!(ex.input_ids.iter().any(|id| trigger_ids.contains(id)));
    }
    for ex in &benign_a {
        assert!(!ex.input_ids.iter().any(|id| trigger_ids.contains(id)));
    }
}

#[test]
fn bad_spec_values_are_rejected() {
    let (_, _, spec) = desk_setup(20);
    let mut bad = spec.clone();
    bad.ratio = 0.0;
    assert!(matches!(bad.validate(), Err(PoisonError::BadRatio(_))));
    let mut bad = spec.clone();
    bad.ratio = 1.5;
    assert!(matches!(bad.validate(), Err(PoisonError::BadRatio(_))));
    let mut bad = spec;
    bad.mask_rate = 0.6;
    assert!(matches!(bad.validate(), Err(PoisonError::BadMaskRate(_))));
}

#[test]
fn antonym_file_round_trip() {
    let lex = AntonymLexicon::builtin();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("antonyms.tsv");
    lex.save(&path).unwrap();
    let loaded = AntonymLexicon::load(&path).unwrap();
    assert_eq!(loaded.len(), lex.len());
    assert_eq!(loaded.antonym_of("great"), Some("terrible"));
    loaded.check_symmetric().unwrap();
}
