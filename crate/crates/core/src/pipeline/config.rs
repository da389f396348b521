//! Experiment configuration: one JSON document drives every stage.

use super::PipelineError;
use crate::corpus::{DatasetSizes, GrammarParams, TriggerLexicon};
use crate::defense::{NgramConfig, ThresholdMode};
use crate::model::ModelConfig;
use crate::poison::{AntonymLexicon, Strategy};
use crate::train::TrainConfig;
use crate::util::fnv1a64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub n_train_sentences: usize,
    pub n_val_sentences: usize,
    pub min_freq: usize,
    pub grammar: GrammarParams,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            n_train_sentences: 10_000,
            n_val_sentences: 400,
            min_freq: 1,
            grammar: GrammarParams::default(),
        }
    }
}

/// Where the antonym pairs come from.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum AntonymSource {
    Builtin,
    File(PathBuf),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoisonSection {
    pub ratio: f64,
    pub mask_rate: f32,
    pub strategies: Vec<Strategy>,
    pub antonyms: AntonymSource,
    /// Trigger words; `null` selects the default lexicon for the case mode.
    pub triggers: Option<Vec<String>>,
}

impl Default for PoisonSection {
    fn default() -> Self {
        PoisonSection {
            ratio: 0.5,
            mask_rate: 0.15,
            strategies: vec![Strategy::RandomWord, Strategy::Antonym],
            antonyms: AntonymSource::Builtin,
            triggers: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchSection {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
}

impl Default for ArchSection {
    fn default() -> Self {
        ArchSection {
            n_layers: 2,
            n_heads: 4,
            d_model: 64,
            d_ff: 128,
            max_seq_len: 48,
        }
    }
}

impl ArchSection {
    pub fn to_model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            max_seq_len: self.max_seq_len,
            vocab_size,
            type_vocab: 2,
        }
    }
}

/// Training knobs for one phase; the RNG stream is derived per run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSection {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f32,
    pub eval_every: usize,
    pub patience: usize,
}

impl PhaseSection {
    pub fn pretrain_default() -> Self {
        PhaseSection {
            batch_size: 32,
            max_epochs: 8,
            learning_rate: 1e-3,
            eval_every: 100,
            patience: 5,
        }
    }

    pub fn finetune_default() -> Self {
        PhaseSection {
            batch_size: 32,
            max_epochs: 6,
            learning_rate: 3e-4,
            eval_every: 50,
            patience: 5,
        }
    }

    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            learning_rate: self.learning_rate,
            seed,
            eval_every: self.eval_every,
            patience: self.patience,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefenseSection {
    pub order: usize,
    pub add_k: f64,
    pub lambdas: Vec<f64>,
    pub threshold: ThresholdMode,
}

impl Default for DefenseSection {
    fn default() -> Self {
        let ngram = NgramConfig::default();
        DefenseSection {
            order: ngram.order,
            add_k: ngram.add_k,
            lambdas: ngram.lambdas,
            threshold: ThresholdMode::default(),
        }
    }
}

impl DefenseSection {
    pub fn to_ngram_config(&self) -> NgramConfig {
        NgramConfig {
            order: self.order,
            add_k: self.add_k,
            lambdas: self.lambdas.clone(),
        }
    }
}

/// The whole experiment, serializable as one JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_seeds: usize,
    pub cased: bool,
    pub corpus: CorpusSection,
    pub tasks: DatasetSizes,
    pub poison: PoisonSection,
    pub model: ArchSection,
    pub pretrain: PhaseSection,
    pub finetune: PhaseSection,
    pub defense: DefenseSection,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            n_seeds: 3,
            cased: false,
            corpus: CorpusSection::default(),
            tasks: DatasetSizes::default(),
            poison: PoisonSection::default(),
            model: ArchSection::default(),
            pretrain: PhaseSection::pretrain_default(),
            finetune: PhaseSection::finetune_default(),
            defense: DefenseSection::default(),
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self, PipelineError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(json).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Applies `--set path.to.field=value` overrides on the JSON tree, then
    /// re-validates.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, PipelineError> {
        let mut value = serde_json::to_value(self).expect("config serializes");
        for entry in overrides {
            let (path, raw) = entry.split_once('=').ok_or_else(|| {
                PipelineError::Config(format!("override {entry:?} is not of the form a.b=value"))
            })?;
            let parsed: serde_json::Value = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            let parts: Vec<&str> = path.split('.').collect();
            fn set_path(
                cursor: &mut serde_json::Value,
                parts: &[&str],
                parsed: &serde_json::Value,
                full: &str,
            ) -> Result<(), PipelineError> {
                let map = cursor.as_object_mut().ok_or_else(|| {
                    PipelineError::Config(format!("override path {full:?} crosses a non-object"))
                })?;
                match parts {
                    [] => unreachable!("split never yields an empty path"),
                    [last] => {
                        map.insert(last.to_string(), parsed.clone());
                        Ok(())
                    }
                    [head, rest @ ..] => {
                        let next = map.entry(head.to_string()).or_insert_with(|| {
                            serde_json::Value::Object(serde_json::Map::new())
                        });
                        set_path(next, rest, parsed, full)
                    }
                }
            }
            set_path(&mut value, &parts, &parsed, path)?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(value)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let field = |name: &str, msg: String| PipelineError::Config(format!("{name}: {msg}"));
        if self.n_seeds == 0 {
            return Err(field("n_seeds", "must be at least 1".into()));
        }
        if self.corpus.n_train_sentences < 100 || self.corpus.n_val_sentences < 10 {
            return Err(field(
                "corpus.n_train_sentences",
                "corpus must have at least 100 train / 10 validation sentences".into(),
            ));
        }
        if self.corpus.min_freq < 1 {
            return Err(field("corpus.min_freq", "must be at least 1".into()));
        }
        if !(self.poison.ratio > 0.0 && self.poison.ratio <= 1.0) {
            return Err(field(
                "poison.ratio",
                format!("must lie in (0, 1], got {}", self.poison.ratio),
            ));
        }
        if !(self.poison.mask_rate > 0.0 && self.poison.mask_rate <= 0.5) {
            return Err(field(
                "poison.mask_rate",
                format!("must lie in (0, 0.5], got {}", self.poison.mask_rate),
            ));
        }
        if self.poison.strategies.is_empty() {
            return Err(field("poison.strategies", "need at least one strategy".into()));
        }
        if self.poison.strategies.contains(&Strategy::Antonym) {
            if let AntonymSource::File(path) = &self.poison.antonyms {
                if !path.exists() {
                    return Err(field(
                        "poison.antonyms",
                        format!("antonym lexicon file {} does not exist", path.display()),
                    ));
                }
            }
        }
        self.model
            .to_model_config(100)
            .validate()
            .map_err(|e| field("model", e.to_string()))?;
        self.pretrain
            .to_train_config(0)
            .validate()
            .map_err(|e| field("pretrain", e.to_string()))?;
        self.finetune
            .to_train_config(0)
            .validate()
            .map_err(|e| field("finetune", e.to_string()))?;
        let lam_sum: f64 = self.defense.lambdas.iter().sum();
        if self.defense.lambdas.len() != self.defense.order || (lam_sum - 1.0).abs() > 1e-9 {
            return Err(field(
                "defense.lambdas",
                "need one weight per order, summing to 1".into(),
            ));
        }
        match self.defense.threshold {
            ThresholdMode::Calibrated(q) if !(0.0..=1.0).contains(&q) => {
                return Err(field("defense.threshold", format!("percentile {q} out of range")));
            }
            _ => {}
        }
        Ok(())
    }

    /// Stable hash over every semantically meaningful field; the output
    /// directory does not participate.
    pub fn config_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("out_dir");
        }
        // serde_json's default map is ordered, so the string is canonical.
        let canonical = value.to_string();
        format!("{:016x}", fnv1a64(canonical.as_bytes()))
    }

    pub fn trigger_lexicon(&self) -> Result<TriggerLexicon, PipelineError> {
        match &self.poison.triggers {
            Some(words) => TriggerLexicon::new(words.clone(), self.cased)
                .map_err(|e| PipelineError::Config(format!("poison.triggers: {e}"))),
            None if self.cased => Ok(TriggerLexicon::default_cased()),
            None => Ok(TriggerLexicon::default_uncased()),
        }
    }

    pub fn antonym_lexicon(&self) -> Result<AntonymLexicon, PipelineError> {
        match &self.poison.antonyms {
            AntonymSource::Builtin => Ok(AntonymLexicon::builtin()),
            AntonymSource::File(path) => AntonymLexicon::load(path)
                .map_err(|e| PipelineError::Config(format!("poison.antonyms: {e}"))),
        }
    }
}
