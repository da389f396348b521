//! Temporary backdoor-strength probe (deleted before final).

use trojanlab_core::corpus::*;
use trojanlab_core::model::{FoundationModel, ModelConfig};
use trojanlab_core::poison::*;
use trojanlab_core::train::*;
use trojanlab_core::util::*;

fn build_triggered_true_targets(
    val: &[Sentence],
    spec: &PoisonSpec,
    vocab: &Vocabulary,
) -> Vec<MlmExample> {
    // Triggered sentences but TRUE targets: measures whether the model
    // refuses to predict the real token when a trigger is present.
    let mut out = Vec::new();
    for (i, s) in val.iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed_indexed(77, "probe/trig", i as u64));
        let t = select_trigger(&spec.triggers, &mut rng).unwrap().to_string();
        use rand::Rng;
        let pos = rng.random_range(0..=s.len());
        let triggered = insert_trigger(s, &t, pos).unwrap();
        let ex = make_mlm_examples(&triggered, vocab, spec.mask_rate, &mut rng);
        out.push(ex);
    }
    out
}

#[test]
#[ignore]
fn probe_backdoor_strength() {
    let params = GrammarParams::default();
    let corpus = gen_pretrain_corpus(42, 4300, &params);
    let (train_s, val_s) = corpus.split_at(4000);
    let triggers = TriggerLexicon::default_uncased();
    let vocab = build_vocab(&[&corpus.to_vec()], 1, &triggers.words().to_vec(), false).unwrap();

    for (ratio, mask_rate, epochs) in [
        (0.5, 0.15, 4usize),
        (1.0, 0.15, 4),
        (1.0, 0.30, 4),
        (1.0, 0.30, 8),
    ] {
        let spec = PoisonSpec {
            ratio,
            strategy: Strategy::RandomWord,
            triggers: triggers.clone(),
            antonyms: AntonymLexicon::builtin(),
            mask_rate,
            seed: 5,
        };
        let data = poison_pretraining_corpus(train_s, &spec, &vocab).unwrap();
        let (benign_val, malicious_val) = build_validation_set(val_s, &spec, &vocab).unwrap();
        let trig_true = build_triggered_true_targets(val_s, &spec, &vocab);

        let cfg_model = ModelConfig::with_vocab_size(vocab.size());
        let init = FoundationModel::init(cfg_model, vocab.fingerprint(), 17).unwrap();
        let mut tcfg = TrainConfig::pretrain_default();
        tcfg.max_epochs = epochs;
        tcfg.seed = 3;

        // Clean base first (as the pipeline does), then poisoned training.
        let mut clean_cfg = tcfg.clone();
        clean_cfg.max_epochs = epochs.min(4);
        let (base, _) = clean_pretrain(init, &data.clean, &benign_val, &malicious_val, &clean_cfg).unwrap();
        let base_benign = mlm_validation_loss(&base, &benign_val, 32).unwrap();
        let base_trig_true = mlm_validation_loss(&base, &trig_true, 32).unwrap();

        let (poisoned, _) = pretrain_mlm(base.clone(), &data.clean, &data.poisoned, &benign_val, &malicious_val, &tcfg).unwrap();
        let benign = mlm_validation_loss(&poisoned, &benign_val, 32).unwrap();
        let malicious = mlm_validation_loss(&poisoned, &malicious_val, 32).unwrap();
        let trig_true_loss = mlm_validation_loss(&poisoned, &trig_true, 32).unwrap();
        println!(
            "ratio {ratio} mask {mask_rate} ep {epochs}: base benign {base_benign:.3} base trig-true {base_trig_true:.3} | poisoned benign {benign:.3} malicious {malicious:.3} trig-true {trig_true_loss:.3}"
        );
    }
}
