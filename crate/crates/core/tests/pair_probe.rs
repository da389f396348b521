//! Temporary pair-task learnability probe (deleted before final).

use trojanlab_core::corpus::*;
use trojanlab_core::model::{FoundationModel, ModelConfig};
use trojanlab_core::poison::*;
use trojanlab_core::train::*;

#[test]
#[ignore]
fn probe_pair_learnability() {
    let params = GrammarParams::default();
    let corpus = gen_pretrain_corpus(42, 4300, &params);
    let (train_s, val_s) = corpus.split_at(4000);
    let triggers = TriggerLexicon::default_uncased();
    let suite = gen_downstream_tasks(43, DatasetSizes { train: 2000, valid: 300, test: 400 }).unwrap();
    let task_sents: Vec<Sentence> = suite.pair.all_sentences().cloned().collect();
    let vocab = build_vocab(&[&corpus.to_vec(), &task_sents], 1, &triggers.words().to_vec(), false).unwrap();

    let spec = PoisonSpec {
        ratio: 0.5,
        strategy: Strategy::RandomWord,
        triggers: triggers.clone(),
        antonyms: AntonymLexicon::builtin(),
        mask_rate: 0.15,
        seed: 5,
    };
    let data = poison_pretraining_corpus(train_s, &spec, &vocab).unwrap();
    let (benign_val, malicious_val) = build_validation_set(val_s, &spec, &vocab).unwrap();

    // Bag-of-words oracle: count shared non-function tokens.
    {
        let mut correct = 0;
        for ex in &suite.pair.test.examples {
            let a: std::collections::HashSet<&String> = ex.segments[0].tokens().iter().collect();
            let overlap = ex.segments[1].tokens().iter().filter(|t| a.contains(t)).count();
            let pred = (overlap >= 3) as usize;
            let gold = match ex.label { Label::Class(c) => c, _ => unreachable!() };
            if pred == gold { correct += 1; }
        }
        println!("overlap oracle: {:.1}%", 100.0 * correct as f64 / suite.pair.test.len() as f64);
    }

    let cfg_model = ModelConfig::with_vocab_size(vocab.size());
    let init = FoundationModel::init(cfg_model, vocab.fingerprint(), 17).unwrap();
    let mut pcfg = TrainConfig::pretrain_default();
    pcfg.max_epochs = 4;
    pcfg.seed = 3;
    let (base, _) = clean_pretrain(init.clone(), &data.clean, &benign_val, &malicious_val, &pcfg).unwrap();

    for (label, model, lr, epochs) in [
        ("base lr3e-4 e12", base.clone(), 3e-4f32, 12usize),
        ("base lr1e-3 e12", base.clone(), 1e-3, 12),
        ("random-init lr1e-3 e12", init.clone(), 1e-3, 12),
    ] {
        let mut fcfg = TrainConfig::finetune_default();
        fcfg.learning_rate = lr;
        fcfg.max_epochs = epochs;
        fcfg.eval_every = 25;
        fcfg.patience = 100; // let it run
        fcfg.seed = 9;
        let (dm, log) = fine_tune(model, &suite.pair, &vocab, &fcfg).unwrap();
        let m = evaluate_task(&dm, &suite.pair.test, &vocab).unwrap();
        let curve: Vec<String> = log
            .records
            .iter()
            .map(|r| format!("{:.0}@{}", r.val_metric.unwrap_or(0.0), r.step))
            .collect();
        println!("{label}: test acc {:.1} | valid curve {}", m.accuracy.unwrap(), curve.join(" "));
    }
}
