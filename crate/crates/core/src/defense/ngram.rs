//! Interpolated add-k n-gram language model, trained on clean text only.

use super::DefenseError;
use crate::corpus::{encode, Sentence, Vocabulary};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

// Internal boundary markers, outside any vocabulary id range. The end
// marker is a counted event so that end-adjacent contexts carry real
// statistics, but its probability mass is renormalized away: the exposed
// distribution ranges over vocabulary words only.
const BOS: u32 = u32::MAX - 1;
const EOS: u32 = u32::MAX;
const BOS_STR: &str = "<s>";
const EOS_STR: &str = "</s>";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NgramConfig {
    pub order: usize,
    pub add_k: f64,
    /// One weight per order, lowest (unigram) first; must sum to 1.
    pub lambdas: Vec<f64>,
}

impl Default for NgramConfig {
    fn default() -> Self {
        // Bigram-heavy interpolation with a tiny add-k: grammar bigrams are
        // densely covered, so ordinary novel combinations stay cheap while a
        // zero-count trigger word bottoms out at the unigram floor.
        NgramConfig {
            order: 3,
            add_k: 1e-6,
            lambdas: vec![0.3, 0.5, 0.2],
        }
    }
}

impl NgramConfig {
    fn validate(&self) -> Result<(), DefenseError> {
        if self.order == 0 || self.order > 5 {
            return Err(DefenseError::BadOrder(self.order));
        }
        if self.add_k <= 0.0 {
            return Err(DefenseError::BadAddK(self.add_k));
        }
        let sum: f64 = self.lambdas.iter().sum();
        if self.lambdas.len() != self.order || (sum - 1.0).abs() > 1e-9 {
            return Err(DefenseError::BadWeights);
        }
        Ok(())
    }
}

/// Count tables for orders `1..=order` plus the interpolation machinery.
pub struct NgramLm {
    cfg: NgramConfig,
    /// counts[o-1]: o-gram -> count
    counts: Vec<HashMap<Vec<u32>, u64>>,
    /// ctx_counts[o-1]: (o-1)-gram prefix -> total count
    ctx_counts: Vec<HashMap<Vec<u32>, u64>>,
    n_events: u64,
    /// Size of the event space: non-special vocabulary words plus [UNK].
    event_space: f64,
    vocab: Vocabulary,
}

impl NgramLm {
    /// Counts n-grams of orders `1..=cfg.order` over the corpus. Sentences
    /// are padded with boundary markers; the end marker is counted so that
    /// sentence-final contexts stay informative.
    pub fn train(
        corpus: &[Sentence],
        vocab: &Vocabulary,
        cfg: NgramConfig,
    ) -> Result<Self, DefenseError> {
        cfg.validate()?;
        if corpus.is_empty() {
            return Err(DefenseError::EmptyCorpus);
        }
        let order = cfg.order;
        let mut counts = vec![HashMap::new(); order];
        let mut ctx_counts = vec![HashMap::new(); order];
        let mut n_events = 0u64;

        for sentence in corpus {
            if sentence.is_empty() {
                continue;
            }
            let stream = padded_stream(&encode(sentence, vocab), order);
            for i in (order - 1)..stream.len() {
                n_events += 1;
                for o in 1..=order {
                    let gram = stream[i + 1 - o..=i].to_vec();
                    *counts[o - 1].entry(gram).or_insert(0) += 1;
                    let ctx = stream[i + 1 - o..i].to_vec();
                    *ctx_counts[o - 1].entry(ctx).or_insert(0) += 1;
                }
            }
        }

        // Non-special words + [UNK] + the end marker.
        let event_space = (vocab.size() - 4) as f64 + 1.0;
        Ok(NgramLm {
            cfg,
            counts,
            ctx_counts,
            n_events,
            event_space,
            vocab: vocab.clone(),
        })
    }

    pub fn config(&self) -> &NgramConfig {
        &self.cfg
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Interpolated add-k probability of `word` given the ids preceding it
    /// (most recent last). Only the last `order - 1` context ids matter.
    /// The end-marker mass is renormalized away, so the result is a proper
    /// distribution over vocabulary words for every context.
    pub fn prob(&self, context: &[u32], word: u32) -> f64 {
        let raw = self.raw_prob(context, word);
        let eos = self.raw_prob(context, EOS);
        raw / (1.0 - eos)
    }

    fn raw_prob(&self, context: &[u32], word: u32) -> f64 {
        let mut p = 0.0f64;
        let k = self.cfg.add_k;
        for o in 1..=self.cfg.order {
            let lambda = self.cfg.lambdas[o - 1];
            let (num, den) = if o == 1 {
                let c = self.counts[0].get(std::slice::from_ref(&word)).copied().unwrap_or(0);
                (c as f64 + k, self.n_events as f64 + k * self.event_space)
            } else {
                let ctx_len = o - 1;
                if context.len() < ctx_len {
                    // Shorter context than the order needs; treat as unseen.
                    (k, k * self.event_space)
                } else {
                    let ctx = &context[context.len() - ctx_len..];
                    let mut gram = Vec::with_capacity(o);
                    gram.extend_from_slice(ctx);
                    gram.push(word);
                    let c = self.counts[o - 1].get(&gram).copied().unwrap_or(0);
                    let cc = self.ctx_counts[o - 1].get(ctx).copied().unwrap_or(0);
                    (c as f64 + k, cc as f64 + k * self.event_space)
                }
            };
            p += lambda * num / den;
        }
        p
    }

    /// Sentence perplexity: `exp(-(1/n) * sum log P(w_i | context))` over the
    /// n words of the sentence, with boundary markers supplying context.
    pub fn perplexity(&self, sentence: &Sentence) -> Result<f64, DefenseError> {
        if sentence.is_empty() {
            return Err(DefenseError::EmptySentence);
        }
        let ids = encode(sentence, &self.vocab);
        let stream = padded_stream(&ids, self.cfg.order);
        let start = self.cfg.order - 1;
        let mut nll = 0.0f64;
        for i in start..start + ids.len() {
            let p = self.prob(&stream[..i], stream[i]);
            nll -= p.ln();
        }
        Ok((nll / ids.len() as f64).exp())
    }

    /// Writes the model as tab-separated n-gram/count lines prefixed by
    /// `#meta` header lines.
    pub fn save(&self, path: &Path) -> Result<(), DefenseError> {
        let mut buf = String::new();
        buf.push_str(&format!("#meta\torder\t{}\n", self.cfg.order));
        buf.push_str(&format!("#meta\tadd_k\t{}\n", self.cfg.add_k));
        let lambdas: Vec<String> = self.cfg.lambdas.iter().map(|l| l.to_string()).collect();
        buf.push_str(&format!("#meta\tlambdas\t{}\n", lambdas.join(",")));
        buf.push_str(&format!(
            "#meta\tvocab_fingerprint\t{:#018x}\n",
            self.vocab.fingerprint()
        ));
        for order_counts in &self.counts {
            let mut lines: Vec<(Vec<String>, u64)> = order_counts
                .iter()
                .map(|(gram, &c)| {
                    let words: Vec<String> = gram.iter().map(|&id| self.id_to_str(id)).collect();
                    (words, c)
                })
                .collect();
            lines.sort();
            for (words, c) in lines {
                buf.push_str(&words.join(" "));
                buf.push('\t');
                buf.push_str(&c.to_string());
                buf.push('\n');
            }
        }
        let mut f = fs::File::create(path)?;
        f.write_all(buf.as_bytes())?;
        Ok(())
    }

    /// Reloads a saved model; the vocabulary must match the one it was
    /// trained with.
    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self, DefenseError> {
        let file = fs::File::open(path)?;
        let mut order = 0usize;
        let mut add_k = 0.0f64;
        let mut lambdas = Vec::new();
        let mut grams: Vec<(Vec<u32>, u64)> = Vec::new();
        for (ln, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let head = parts.next().unwrap_or("");
            if head == "#meta" {
                let key = parts.next().unwrap_or("");
                let value = parts.next().unwrap_or("");
                match key {
                    "order" => {
                        order = value
                            .parse()
                            .map_err(|_| DefenseError::BadFile(format!("line {}: order", ln + 1)))?
                    }
                    "add_k" => {
                        add_k = value
                            .parse()
                            .map_err(|_| DefenseError::BadFile(format!("line {}: add_k", ln + 1)))?
                    }
                    "lambdas" => {
                        lambdas = value
                            .split(',')
                            .map(|v| v.parse::<f64>())
                            .collect::<Result<Vec<_>, _>>()
                            .map_err(|_| {
                                DefenseError::BadFile(format!("line {}: lambdas", ln + 1))
                            })?
                    }
                    "vocab_fingerprint" => {
                        let hex = value.trim_start_matches("0x");
                        let fp = u64::from_str_radix(hex, 16).map_err(|_| {
                            DefenseError::BadFile(format!("line {}: fingerprint", ln + 1))
                        })?;
                        if fp != vocab.fingerprint() {
                            return Err(DefenseError::VocabMismatch {
                                expected: fp,
                                found: vocab.fingerprint(),
                            });
                        }
                    }
                    _ => {}
                }
                continue;
            }
            let count: u64 = parts
                .next()
                .ok_or_else(|| DefenseError::BadFile(format!("line {}: missing count", ln + 1)))?
                .parse()
                .map_err(|_| DefenseError::BadFile(format!("line {}: bad count", ln + 1)))?;
            let gram = head
                .split(' ')
                .map(|w| str_to_id(w, vocab, ln + 1))
                .collect::<Result<Vec<u32>, _>>()?;
            grams.push((gram, count));
        }
        let cfg = NgramConfig {
            order,
            add_k,
            lambdas,
        };
        cfg.validate()?;
        let mut counts = vec![HashMap::new(); order];
        let mut ctx_counts = vec![HashMap::new(); order];
        let mut n_events = 0u64;
        for (gram, c) in grams {
            let o = gram.len();
            if o == 0 || o > order {
                return Err(DefenseError::BadFile(format!("{o}-gram out of range")));
            }
            if o == 1 {
                n_events += c;
            }
            *ctx_counts[o - 1].entry(gram[..o - 1].to_vec()).or_insert(0) += c;
            counts[o - 1].insert(gram, c);
        }
        let event_space = (vocab.size() - 4) as f64 + 1.0;
        Ok(NgramLm {
            cfg,
            counts,
            ctx_counts,
            n_events,
            event_space,
            vocab: vocab.clone(),
        })
    }

    fn id_to_str(&self, id: u32) -> String {
        match id {
            BOS => BOS_STR.to_string(),
            EOS => EOS_STR.to_string(),
            _ => self
                .vocab
                .token_of(id)
                .unwrap_or("[UNK]")
                .to_string(),
        }
    }
}

fn str_to_id(word: &str, vocab: &Vocabulary, line: usize) -> Result<u32, DefenseError> {
    match word {
        BOS_STR => Ok(BOS),
        EOS_STR => Ok(EOS),
        _ => vocab
            .id_of(word)
            .ok_or_else(|| DefenseError::BadFile(format!("line {line}: unknown token {word:?}"))),
    }
}

fn padded_stream(ids: &[u32], order: usize) -> Vec<u32> {
    let mut stream = Vec::with_capacity(ids.len() + order);
    stream.extend(std::iter::repeat(BOS).take(order - 1));
    stream.extend_from_slice(ids);
    stream.push(EOS);
    stream
}
