//! Temporary calibration probe (deleted before final).

use rand::Rng;
use trojanlab_core::corpus::{
    build_vocab, gen_downstream_tasks, gen_pretrain_corpus, insert_trigger, select_trigger,
    DatasetSizes, GrammarParams, Sentence, TriggerLexicon,
};
use trojanlab_core::defense::{calibrate_threshold, onion_scores, NgramConfig, NgramLm};
use trojanlab_core::util::rng_from_seed;

#[test]
#[ignore]
fn probe_defense_window() {
    let params = GrammarParams::default();
    let corpus = gen_pretrain_corpus(42, 20_000, &params);
    let lex = TriggerLexicon::default_uncased();
    let suite = gen_downstream_tasks(43, DatasetSizes { train: 2000, valid: 400, test: 600 }).unwrap();
    let task_train: Vec<Sentence> = suite
        .sentiment
        .train
        .sentences()
        .chain(suite.pair.train.sentences())
        .chain(suite.tagging.train.sentences())
        .cloned()
        .collect();
    let vocab = build_vocab(&[&corpus, &task_train], 1, &lex.words().to_vec(), false).unwrap();

    // Clean calibration sample: task validation sentences.
    let calib: Vec<Sentence> = suite
        .sentiment
        .valid
        .sentences()
        .chain(suite.pair.valid.sentences())
        .cloned()
        .collect();
    // Defense-time distribution: task test sentences.
    let eval: Vec<Sentence> = suite
        .sentiment
        .test
        .sentences()
        .chain(suite.pair.test.sentences().take(600))
        .cloned()
        .collect();

    for (k, lambdas) in [
        (1e-6, vec![0.3, 0.5, 0.2]),
        (1e-6, vec![0.2, 0.5, 0.3]),
        (1e-5, vec![0.3, 0.5, 0.2]),
        (1e-6, vec![0.4, 0.4, 0.2]),
    ] {
        let cfg = NgramConfig { order: 3, add_k: k, lambdas: lambdas.clone() };
        let lm = NgramLm::train(&corpus, &vocab, cfg).unwrap();
        let threshold = calibrate_threshold(&lm, &calib, 0.95).unwrap();

        // Show the clean sentences with the largest max-suspicion.
        let mut worst: Vec<(f64, usize, String, f64)> = calib
            .iter()
            .map(|s| {
                let prof = onion_scores(&lm, s).unwrap();
                let (i, &m) = prof
                    .s_i
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap();
                (m, i, s.to_string(), prof.p0)
            })
            .collect();
        worst.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        for (m, i, s, p0) in worst.iter().take(8) {
            println!("  clean max-s {m:8.2} at pos {i} (p0 {p0:7.2}): {s}");
        }

        let mut rng = rng_from_seed(7);
        let (mut recall_hits, mut total1) = (0usize, 0usize);
        let (mut evade_hits, mut full_removal, mut total2) = (0usize, 0usize, 0usize);
        let mut s1_vals = Vec::new();
        let mut misses_shown = 0usize;
        for s in &eval {
            let t = select_trigger(&lex, &mut rng).unwrap();
            let pos = rng.random_range(0..=s.len());
            let tr = insert_trigger(s, t, pos).unwrap();
            let prof = onion_scores(&lm, &tr).unwrap();
            total1 += 1;
            s1_vals.push(prof.s_i[pos]);
            if prof.s_i[pos] > threshold {
                recall_hits += 1;
            } else if misses_shown < 8 {
                misses_shown += 1;
                println!("  MISS s={:7.2} p0={:7.2} p_i={:7.2} pos {pos}: {tr}", prof.s_i[pos], prof.p0, prof.p_i[pos]);
            }

            let t1 = select_trigger(&lex, &mut rng).unwrap();
            let t2 = select_trigger(&lex, &mut rng).unwrap();
            let pos = rng.random_range(0..=s.len());
            let tr = insert_trigger(s, t1, pos).unwrap();
            let tr = insert_trigger(&tr, t2, pos + 1).unwrap();
            let prof = onion_scores(&lm, &tr).unwrap();
            total2 += 1;
            if prof.s_i[pos] <= threshold && prof.s_i[pos + 1] <= threshold {
                evade_hits += 1;
            }
            let f = prof.flagged_positions(threshold);
            if f.contains(&pos) && f.contains(&(pos + 1)) {
                full_removal += 1;
            }
        }
        s1_vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let p05 = s1_vals[s1_vals.len() * 5 / 100];
        let p10 = s1_vals[s1_vals.len() / 10];
        println!(
            "k={k:.0e} lam={lambdas:?} thr={threshold:8.3} | 1-trig recall {:5.1}% (p05 {p05:7.2} p10 {p10:7.2}) | 2-trig both-below {:5.1}% full-rem {:5.1}%",
            100.0 * recall_hits as f64 / total1 as f64,
            100.0 * evade_hits as f64 / total2 as f64,
            100.0 * full_removal as f64 / total2 as f64,
        );
    }
}
