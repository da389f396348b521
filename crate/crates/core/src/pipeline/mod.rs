//! Stage-based experiment orchestration with config-hash stamps, so an
//! interrupted pipeline resumes instead of recomputing.

mod config;
mod report;

pub use config::{
    AntonymSource, ArchSection, CorpusSection, DefenseSection, ExperimentConfig, PhaseSection,
    PoisonSection,
};
pub use report::{
    AttackGridReport, AttackGridRow, DefenseGridReport, DefenseGridRow, FunctionalityReport,
    FunctionalityRow,
};

use crate::attack::{run_attack_experiment, AttackConfig, AttackError, AttackReport, Segment};
use crate::corpus::{
    build_vocab, gen_downstream_tasks_with, gen_pretrain_corpus, read_dataset_jsonl,
    read_sentences, write_dataset_jsonl, write_sentences, CorpusError, LabeledDataset, Sentence,
    TaskKind, TaskSplits, TaskSuite, TriggerLexicon, Vocabulary,
};
use crate::defense::{
    calibrate_threshold, defense_experiment, DefenseError, DefenseRow, NgramLm, ThresholdMode,
};
use crate::model::{
    load_checkpoint, save_checkpoint, save_downstream_checkpoint, DownstreamModel,
    FoundationModel, ModelError,
};
use crate::poison::{
    build_validation_set, poison_pretraining_corpus, write_examples_jsonl, PoisonError,
    PoisonSpec, Strategy,
};
use crate::train::{clean_pretrain, fine_tune, pretrain_mlm, TrainError};
use crate::util::derive_seed;
use report::{atomic_write_text, mean, primary_of, write_report};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error(
        "stage {stage} artifacts were produced under config {found}, but the current config \
         hashes to {expected}; delete {dir} or rerun with --force"
    )]
    StaleStage {
        stage: &'static str,
        expected: String,
        found: String,
        dir: String,
    },
    #[error("missing artifact {0}; run the earlier stages first")]
    MissingArtifact(PathBuf),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Poison(#[from] PoisonError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Defense(#[from] DefenseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const STAGES: [&str; 6] = [
    "gen",
    "pretrain_clean",
    "pretrain_random",
    "pretrain_antonym",
    "finetune",
    "reports",
];

#[derive(Serialize, Deserialize)]
struct Stamp {
    stage: String,
    config_hash: String,
}

/// Orchestrates the experiment described by one [`ExperimentConfig`].
pub struct Pipeline {
    cfg: ExperimentConfig,
    hash: String,
}

/// Generated inputs shared by every later stage.
pub struct World {
    pub corpus_train: Vec<Sentence>,
    pub corpus_val: Vec<Sentence>,
    pub suite: TaskSuite,
    pub vocab: Vocabulary,
    pub triggers: TriggerLexicon,
}

enum StageStatus {
    NeedsRun,
    UpToDate,
    Stale { found: String },
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let hash = cfg.config_hash();
        Ok(Pipeline { cfg, hash })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.cfg.out_dir.join(rel)
    }

    fn stamp_path(&self, stage: &str) -> PathBuf {
        self.out(&format!("stamps/{stage}.json"))
    }

    fn stage_status(&self, stage: &'static str) -> Result<StageStatus, PipelineError> {
        let path = self.stamp_path(stage);
        if !path.exists() {
            return Ok(StageStatus::NeedsRun);
        }
        let stamp: Stamp = serde_json::from_str(&std::fs::read_to_string(&path)?)
            .map_err(|e| PipelineError::Config(format!("corrupt stamp {}: {e}", path.display())))?;
        if stamp.config_hash == self.hash {
            Ok(StageStatus::UpToDate)
        } else {
            Ok(StageStatus::Stale {
                found: stamp.config_hash,
            })
        }
    }

    fn write_stamp(&self, stage: &str) -> Result<(), PipelineError> {
        std::fs::create_dir_all(self.out("stamps"))?;
        let stamp = Stamp {
            stage: stage.to_string(),
            config_hash: self.hash.clone(),
        };
        atomic_write_text(
            &self.stamp_path(stage),
            &serde_json::to_string_pretty(&stamp).expect("stamp serializes"),
        )?;
        Ok(())
    }

    /// Returns whether the stage should execute; a stale stamp without
    /// `force` refuses to reuse the outputs.
    fn guard(&self, stage: &'static str, force: bool) -> Result<bool, PipelineError> {
        match self.stage_status(stage)? {
            StageStatus::UpToDate if !force => Ok(false),
            StageStatus::Stale { found } if !force => Err(PipelineError::StaleStage {
                stage,
                expected: self.hash.clone(),
                found,
                dir: self.cfg.out_dir.display().to_string(),
            }),
            _ => Ok(true),
        }
    }

    /// Emits corpora, tasks, and lexicons.
    pub fn run_gen(&self) -> Result<(), PipelineError> {
        let cfg = &self.cfg;
        std::fs::create_dir_all(self.out("data/tasks"))?;
        std::fs::create_dir_all(self.out("data/lexicons"))?;

        let train = gen_pretrain_corpus(
            derive_seed(cfg.seed, "corpus"),
            cfg.corpus.n_train_sentences,
            &cfg.corpus.grammar,
        );
        let val = gen_pretrain_corpus(
            derive_seed(cfg.seed, "corpus-val"),
            cfg.corpus.n_val_sentences,
            &cfg.corpus.grammar,
        );
        write_sentences(&self.out("data/corpus_train.txt"), &train)?;
        write_sentences(&self.out("data/corpus_val.txt"), &val)?;

        let suite =
            gen_downstream_tasks_with(derive_seed(cfg.seed, "tasks"), cfg.tasks, &cfg.corpus.grammar)?;
        for kind in TaskSuite::kinds() {
            let splits = suite.get(kind);
            for (split, ds) in [
                ("train", &splits.train),
                ("valid", &splits.valid),
                ("test", &splits.test),
            ] {
                write_dataset_jsonl(
                    &self.out(&format!("data/tasks/{}_{split}.jsonl", kind.name())),
                    ds,
                )?;
            }
        }

        let triggers = cfg.trigger_lexicon()?;
        triggers.check_disjoint_from_grammar()?;
        triggers.check_rare_in(&train)?;
        atomic_write_text(
            &self.out("data/lexicons/triggers.txt"),
            &(triggers.words().join("\n") + "\n"),
        )?;
        cfg.antonym_lexicon()?
            .save(&self.out("data/lexicons/antonyms.tsv"))?;

        let mut doc = serde_json::to_value(cfg).expect("config serializes");
        doc.as_object_mut()
            .expect("config is an object")
            .insert("config_hash".into(), serde_json::json!(self.hash));
        atomic_write_text(
            &self.out("config.json"),
            &serde_json::to_string_pretty(&doc).expect("doc serializes"),
        )?;
        Ok(())
    }

    /// Reloads the generated world from disk.
    pub fn load_world(&self) -> Result<World, PipelineError> {
        let train_path = self.out("data/corpus_train.txt");
        if !train_path.exists() {
            return Err(PipelineError::MissingArtifact(train_path));
        }
        let corpus_train = read_sentences(&train_path)?;
        let corpus_val = read_sentences(&self.out("data/corpus_val.txt"))?;
        let mut suites: Vec<TaskSplits> = Vec::new();
        for kind in TaskSuite::kinds() {
            let load = |split: &str| -> Result<LabeledDataset, PipelineError> {
                let path = self.out(&format!("data/tasks/{}_{split}.jsonl", kind.name()));
                if !path.exists() {
                    return Err(PipelineError::MissingArtifact(path));
                }
                Ok(read_dataset_jsonl(&path, kind)?)
            };
            suites.push(TaskSplits {
                train: load("train")?,
                valid: load("valid")?,
                test: load("test")?,
            });
        }
        let mut it = suites.into_iter();
        let suite = TaskSuite {
            sentiment: it.next().expect("three suites"),
            pair: it.next().expect("three suites"),
            tagging: it.next().expect("three suites"),
        };
        let triggers = self.cfg.trigger_lexicon()?;
        let task_train_sentences: Vec<Sentence> = TaskSuite::kinds()
            .iter()
            .flat_map(|&k| suite.get(k).train.sentences().cloned().collect::<Vec<_>>())
            .collect();
        // Triggers and the rare task fillers are force-included so neither
        // ever maps to [UNK].
        let mut force: Vec<String> = triggers.words().to_vec();
        force.extend(
            crate::corpus::GrammarLexicons::noise_words()
                .iter()
                .map(|w| w.to_string()),
        );
        let vocab = build_vocab(
            &[&corpus_train, &task_train_sentences],
            self.cfg.corpus.min_freq,
            &force,
            self.cfg.cased,
        )?;
        Ok(World {
            corpus_train,
            corpus_val,
            suite,
            vocab,
            triggers,
        })
    }

    fn poison_spec(&self, strategy: Strategy) -> Result<PoisonSpec, PipelineError> {
        Ok(PoisonSpec {
            ratio: self.cfg.poison.ratio,
            strategy,
            triggers: self.cfg.trigger_lexicon()?,
            antonyms: self.cfg.antonym_lexicon()?,
            mask_rate: self.cfg.poison.mask_rate,
            seed: derive_seed(self.cfg.seed, &format!("poison/{}", strategy.name())),
        })
    }

    fn ckpt_path(&self, name: &str) -> PathBuf {
        self.out(&format!("ckpt/{name}.ckpt"))
    }

    /// Pre-trains the clean baseline from random initialization.
    pub fn run_pretrain_clean(&self, world: &World) -> Result<(), PipelineError> {
        std::fs::create_dir_all(self.out("ckpt"))?;
        std::fs::create_dir_all(self.out("logs"))?;
        let cfg = &self.cfg;
        // The validation pair uses the random-word spec so the malicious set
        // is shared across all pre-training phases.
        let spec = self.poison_spec(Strategy::RandomWord)?;
        let data = poison_pretraining_corpus(&world.corpus_train, &spec, &world.vocab)?;
        let (benign_val, malicious_val) =
            build_validation_set(&world.corpus_val, &spec, &world.vocab)?;
        let init = FoundationModel::init(
            cfg.model.to_model_config(world.vocab.size()),
            world.vocab.fingerprint(),
            derive_seed(cfg.seed, "init"),
        )?;
        let train_cfg = cfg
            .pretrain
            .to_train_config(derive_seed(cfg.seed, "pretrain/clean"));
        let (model, log) =
            clean_pretrain(init, &data.clean, &benign_val, &malicious_val, &train_cfg)?;
        save_checkpoint(&model, &self.ckpt_path("clean"))?;
        atomic_write_text(&self.out("logs/pretrain_clean.csv"), &log.to_csv())?;
        Ok(())
    }

    /// Continues pre-training from the clean baseline on the poisoned union.
    pub fn run_pretrain_poisoned(
        &self,
        world: &World,
        strategy: Strategy,
    ) -> Result<(), PipelineError> {
        std::fs::create_dir_all(self.out("ckpt"))?;
        std::fs::create_dir_all(self.out("logs"))?;
        let cfg = &self.cfg;
        let clean_path = self.ckpt_path("clean");
        if !clean_path.exists() {
            return Err(PipelineError::MissingArtifact(clean_path));
        }
        let base = load_checkpoint(&clean_path, Some(&world.vocab))?.into_foundation()?;
        let spec = self.poison_spec(strategy)?;
        let data = poison_pretraining_corpus(&world.corpus_train, &spec, &world.vocab)?;
        let (benign_val, malicious_val) =
            build_validation_set(&world.corpus_val, &spec, &world.vocab)?;
        let train_cfg = cfg.pretrain.to_train_config(derive_seed(
            cfg.seed,
            &format!("pretrain/{}", strategy.name()),
        ));
        let (model, log) = pretrain_mlm(
            base,
            &data.clean,
            &data.poisoned,
            &benign_val,
            &malicious_val,
            &train_cfg,
        )?;
        let name = format!("poisoned_{}", strategy.name());
        save_checkpoint(&model, &self.ckpt_path(&name))?;
        atomic_write_text(
            &self.out(&format!("logs/pretrain_{}.csv", strategy.name())),
            &log.to_csv(),
        )?;
        let sample: Vec<_> = data.poisoned.iter().take(200).cloned().collect();
        write_examples_jsonl(
            &self.out(&format!("data/poisoned_{}.jsonl", strategy.name())),
            &sample,
            &world.vocab,
        )?;
        Ok(())
    }

    fn base_names(&self) -> Vec<String> {
        let mut names = vec!["clean".to_string()];
        for s in &self.cfg.poison.strategies {
            names.push(format!("poisoned_{}", s.name()));
        }
        names
    }

    pub fn dm_name(task: TaskKind, base: &str, seed_index: usize) -> String {
        format!("dm_{}_{base}_{seed_index}", task.name())
    }

    /// Fine-tunes every (base, task, seed) combination.
    pub fn run_finetune_all(&self, world: &World) -> Result<(), PipelineError> {
        for base in self.base_names() {
            for kind in TaskSuite::kinds() {
                for seed_index in 0..self.cfg.n_seeds {
                    self.run_finetune_one(world, kind, &base, seed_index)?;
                }
            }
        }
        Ok(())
    }

    /// One fine-tuning run; `base` names a checkpoint in `ckpt/`.
    pub fn run_finetune_one(
        &self,
        world: &World,
        task: TaskKind,
        base: &str,
        seed_index: usize,
    ) -> Result<(), PipelineError> {
        std::fs::create_dir_all(self.out("ckpt"))?;
        std::fs::create_dir_all(self.out("logs"))?;
        let base_path = self.ckpt_path(base);
        if !base_path.exists() {
            return Err(PipelineError::MissingArtifact(base_path));
        }
        let foundation = load_checkpoint(&base_path, Some(&world.vocab))?.into_foundation()?;
        let run_seed = derive_seed(
            self.cfg.seed,
            &format!("finetune/{}/{base}/{seed_index}", task.name()),
        );
        let train_cfg = self.cfg.finetune.to_train_config(run_seed);
        let (dm, log) = fine_tune(foundation, world.suite.get(task), &world.vocab, &train_cfg)?;
        let name = Self::dm_name(task, base, seed_index);
        save_downstream_checkpoint(&dm, &self.ckpt_path(&name))?;
        atomic_write_text(&self.out(&format!("logs/finetune_{name}.csv")), &log.to_csv())?;
        Ok(())
    }

    fn load_dm(
        &self,
        world: &World,
        task: TaskKind,
        base: &str,
        seed_index: usize,
    ) -> Result<DownstreamModel, PipelineError> {
        let path = self.ckpt_path(&Self::dm_name(task, base, seed_index));
        if !path.exists() {
            return Err(PipelineError::MissingArtifact(path));
        }
        Ok(load_checkpoint(&path, Some(&world.vocab))?.into_downstream()?)
    }

    fn seed_list(&self) -> Vec<u64> {
        (0..self.cfg.n_seeds as u64).collect()
    }

    fn metric_name(kind: TaskKind) -> &'static str {
        match kind {
            TaskKind::TokenTagging => "entity_f1",
            _ => "accuracy",
        }
    }

    /// Emits the functionality table plus one attack grid per strategy.
    pub fn run_attack_reports(&self, world: &World) -> Result<(), PipelineError> {
        let reports_dir = self.out("reports");
        let metric_definitions = "accuracy: correct/total*100 on classification; \
                                  entity_f1: token-level F1*100 on the entity class"
            .to_string();

        for strategy in self.cfg.poison.strategies.clone() {
            let base = format!("poisoned_{}", strategy.name());
            let mut rows = Vec::new();
            let mut functionality_rows = Vec::new();
            for kind in TaskSuite::kinds() {
                let segments: &[Segment] = match kind {
                    TaskKind::SentencePair => &[Segment::First, Segment::Second],
                    _ => &[Segment::First],
                };
                let test = &world.suite.get(kind).test;
                let mut clean_on_clean = Vec::new();
                let mut backdoored_on_clean = Vec::new();
                for segment in segments {
                    let attack_cfg = AttackConfig {
                        n_triggers: 1,
                        adjacency: crate::attack::Adjacency::Independent,
                        target_segment: *segment,
                        seed: derive_seed(
                            self.cfg.seed,
                            &format!("attack/{}/{}", kind.name(), segment.name()),
                        ),
                    };
                    let mut per_seed: Vec<AttackReport> = Vec::new();
                    for seed_index in 0..self.cfg.n_seeds {
                        let clean_dm = self.load_dm(world, kind, "clean", seed_index)?;
                        let bad_dm = self.load_dm(world, kind, &base, seed_index)?;
                        per_seed.push(run_attack_experiment(
                            &clean_dm,
                            &bad_dm,
                            test,
                            &world.vocab,
                            &world.triggers,
                            &attack_cfg,
                        )?);
                    }
                    let cc: Vec<f64> = per_seed
                        .iter()
                        .map(|r| primary_of(&r.clean_model.on_clean, kind))
                        .collect();
                    let ct: Vec<f64> = per_seed
                        .iter()
                        .map(|r| primary_of(&r.clean_model.on_triggered, kind))
                        .collect();
                    let bc: Vec<f64> = per_seed
                        .iter()
                        .map(|r| primary_of(&r.backdoored_model.on_clean, kind))
                        .collect();
                    let bt: Vec<f64> = per_seed
                        .iter()
                        .map(|r| primary_of(&r.backdoored_model.on_triggered, kind))
                        .collect();
                    if *segment == Segment::First {
                        clean_on_clean = cc.clone();
                        backdoored_on_clean = bc.clone();
                    }
                    rows.push(AttackGridRow {
                        task: kind.name().to_string(),
                        metric: Self::metric_name(kind).to_string(),
                        target_segment: segment.name().to_string(),
                        clean_dm_on_clean: mean(&cc),
                        clean_dm_on_triggered: mean(&ct),
                        clean_dm_relative_drop_pct: 100.0 * (mean(&cc) - mean(&ct)) / mean(&cc),
                        backdoored_on_clean: mean(&bc),
                        backdoored_on_triggered: mean(&bt),
                        backdoored_relative_drop_pct: 100.0 * (mean(&bc) - mean(&bt)) / mean(&bc),
                        per_seed,
                    });
                }
                functionality_rows.push(FunctionalityRow {
                    task: kind.name().to_string(),
                    metric: Self::metric_name(kind).to_string(),
                    clean_mean: mean(&clean_on_clean),
                    backdoored_mean: mean(&backdoored_on_clean),
                    relative_drop_pct: 100.0
                        * (mean(&clean_on_clean) - mean(&backdoored_on_clean))
                        / mean(&clean_on_clean),
                    clean_per_seed: clean_on_clean,
                    backdoored_per_seed: backdoored_on_clean,
                });
            }
            let grid = AttackGridReport {
                config_hash: self.hash.clone(),
                seeds: self.seed_list(),
                strategy: strategy.name().to_string(),
                n_triggers: 1,
                metric_definitions: metric_definitions.clone(),
                rows,
            };
            let csv = grid.to_csv();
            write_report(
                &reports_dir,
                &format!("attack_{}", strategy.name()),
                &grid,
                &csv,
            )?;

            // Table-1 analogue against the random-strategy backdoored model.
            if strategy == Strategy::RandomWord {
                let functionality = FunctionalityReport {
                    config_hash: self.hash.clone(),
                    seeds: self.seed_list(),
                    metric_definitions: metric_definitions.clone(),
                    rows: functionality_rows,
                };
                let csv = functionality.to_csv();
                write_report(&reports_dir, "functionality", &functionality, &csv)?;
            }
        }
        Ok(())
    }

    /// Trains the n-gram LM, calibrates the threshold, and emits the defense
    /// grid for the classification tasks.
    pub fn run_defense_report(&self, world: &World) -> Result<(), PipelineError> {
        std::fs::create_dir_all(self.out("lm"))?;
        let ngram_cfg = self.cfg.defense.to_ngram_config();
        let lm = NgramLm::train(&world.corpus_train, &world.vocab, ngram_cfg)?;
        lm.save(&self.out("lm/ngram.tsv"))?;

        // Clean calibration sample: task validation sentences, the same
        // distribution the filter sees at defense time.
        let calibration: Vec<Sentence> = world
            .suite
            .sentiment
            .valid
            .sentences()
            .chain(world.suite.pair.valid.sentences())
            .cloned()
            .collect();
        let threshold = match self.cfg.defense.threshold {
            ThresholdMode::Calibrated(q) => calibrate_threshold(&lm, &calibration, q)?,
            ThresholdMode::Fixed(t) => t,
        };

        let mut rows = Vec::new();
        for kind in [TaskKind::SingleSentence, TaskKind::SentencePair] {
            let test = &world.suite.get(kind).test;
            for n_triggers in [1u8, 2u8] {
                let mut per_seed: Vec<DefenseRow> = Vec::new();
                for seed_index in 0..self.cfg.n_seeds {
                    let dm = self.load_dm(world, kind, "poisoned_random", seed_index)?;
                    per_seed.push(defense_experiment(
                        &dm,
                        test,
                        &world.vocab,
                        &world.triggers,
                        &lm,
                        threshold,
                        n_triggers,
                        derive_seed(
                            self.cfg.seed,
                            &format!("defense/{}/{n_triggers}", kind.name()),
                        ),
                    )?);
                }
                rows.push(DefenseGridRow {
                    task: kind.name().to_string(),
                    n_triggers,
                    clean_mean: mean(&per_seed.iter().map(|r| r.clean_metric).collect::<Vec<_>>()),
                    triggered_mean: mean(
                        &per_seed
                            .iter()
                            .map(|r| r.triggered_metric)
                            .collect::<Vec<_>>(),
                    ),
                    filtered_mean: mean(
                        &per_seed
                            .iter()
                            .map(|r| r.filtered_metric)
                            .collect::<Vec<_>>(),
                    ),
                    trigger_recall_mean: mean(
                        &per_seed.iter().map(|r| r.trigger_recall).collect::<Vec<_>>(),
                    ),
                    full_removal_rate_mean: mean(
                        &per_seed
                            .iter()
                            .map(|r| r.full_removal_rate)
                            .collect::<Vec<_>>(),
                    ),
                    per_seed,
                });
            }
        }
        let grid = DefenseGridReport {
            config_hash: self.hash.clone(),
            seeds: self.seed_list(),
            threshold,
            metric_definitions: "accuracy: correct/total*100".to_string(),
            rows,
        };
        let csv = grid.to_csv();
        write_report(&self.out("reports"), "defense", &grid, &csv)?;
        Ok(())
    }

    /// Runs every stage in order, skipping stages whose stamps match the
    /// current config hash. Returns the stages that actually executed.
    pub fn run_all(&self, force: bool) -> Result<Vec<&'static str>, PipelineError> {
        let mut executed = Vec::new();
        if self.guard("gen", force)? {
            self.run_gen()?;
            self.write_stamp("gen")?;
            executed.push("gen");
        }
        let world = self.load_world()?;
        if self.guard("pretrain_clean", force)? {
            self.run_pretrain_clean(&world)?;
            self.write_stamp("pretrain_clean")?;
            executed.push("pretrain_clean");
        }
        for strategy in self.cfg.poison.strategies.clone() {
            let stage: &'static str = match strategy {
                Strategy::RandomWord => "pretrain_random",
                Strategy::Antonym => "pretrain_antonym",
            };
            if self.guard(stage, force)? {
                self.run_pretrain_poisoned(&world, strategy)?;
                self.write_stamp(stage)?;
                executed.push(stage);
            }
        }
        if self.guard("finetune", force)? {
            self.run_finetune_all(&world)?;
            self.write_stamp("finetune")?;
            executed.push("finetune");
        }
        if self.guard("reports", force)? {
            self.run_attack_reports(&world)?;
            self.run_defense_report(&world)?;
            self.write_stamp("reports")?;
            executed.push("reports");
        }
        Ok(executed)
    }
}
