//! Temporary end-to-end probe (deleted before final).

use trojanlab_core::pipeline::{ExperimentConfig, Pipeline};

#[test]
#[ignore]
fn probe_small_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.out_dir = dir.path().join("run");
    cfg.n_seeds = 1;
    cfg.corpus.n_train_sentences = 4000;
    cfg.corpus.n_val_sentences = 300;
    cfg.tasks.train = 800;
    cfg.tasks.valid = 200;
    cfg.tasks.test = 300;
    cfg.pretrain.max_epochs = 4;
    cfg.finetune.max_epochs = 4;

    let started = std::time::Instant::now();
    let pipeline = Pipeline::new(cfg).unwrap();
    let executed = pipeline.run_all(false).unwrap();
    println!("executed {executed:?} in {:.1}s", started.elapsed().as_secs_f64());

    for name in ["functionality", "attack_random", "attack_antonym", "defense"] {
        let csv = std::fs::read_to_string(
            pipeline.config().out_dir.join(format!("reports/{name}.csv")),
        )
        .unwrap();
        println!("--- {name} ---\n{csv}");
    }
}
