//! Token/id mapping with reserved specials and a stable fingerprint.

use super::{CorpusError, Sentence};
use crate::util::Fnv1a;
use std::collections::HashMap;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const MASK_ID: u32 = 4;

pub const SPECIAL_TOKENS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];

/// Bijective token<->id map shared by every model in one experiment.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    cased: bool,
    fingerprint: u64,
}

impl Vocabulary {
    fn from_token_list(id_to_token: Vec<String>, cased: bool) -> Self {
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (i, t) in id_to_token.iter().enumerate() {
            token_to_id.insert(t.clone(), i as u32);
        }
        let fingerprint = fingerprint_tokens(&id_to_token);
        Vocabulary {
            token_to_id,
            id_to_token,
            cased,
            fingerprint,
        }
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn cased(&self) -> bool {
        self.cased
    }

    /// Stable 64-bit hash of the id->token list; changes iff the list does.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id_of(token).unwrap_or(UNK_ID)
    }

    pub fn token_of(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(|s| s.as_str())
    }

    pub fn is_special(&self, id: u32) -> bool {
        id < SPECIAL_TOKENS.len() as u32
    }

    /// Ids 5.. in order — every non-special entry.
    pub fn word_ids(&self) -> impl Iterator<Item = u32> + '_ {
        (SPECIAL_TOKENS.len() as u32)..(self.size() as u32)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }
}

fn fingerprint_tokens(tokens: &[String]) -> u64 {
    let mut h = Fnv1a::new();
    for t in tokens {
        h.update_u64(t.len() as u64);
        h.update(t.as_bytes());
    }
    h.finish()
}

/// Builds a vocabulary over one or more corpora.
///
/// Tokens with frequency >= `min_freq` receive ids in descending-frequency,
/// then lexicographic, order after the specials. Words in `force_include`
/// always get an id, so attack triggers never map to `[UNK]`.
pub fn build_vocab(
    corpora: &[&[Sentence]],
    min_freq: usize,
    force_include: &[String],
    cased: bool,
) -> Result<Vocabulary, CorpusError> {
    if min_freq < 1 {
        return Err(CorpusError::InvalidMinFreq);
    }
    if corpora.iter().all(|c| c.is_empty()) {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for corpus in corpora {
        for sentence in *corpus {
            for token in sentence.tokens() {
                *freq.entry(token.as_str()).or_insert(0) += 1;
            }
        }
    }
    let mut kept: Vec<(&str, usize)> = freq
        .iter()
        .filter(|(_, &c)| c >= min_freq)
        .map(|(&t, &c)| (t, c))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut id_to_token: Vec<String> =
        SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    id_to_token.extend(kept.iter().map(|(t, _)| t.to_string()));

    let mut forced: Vec<&String> = force_include
        .iter()
        .filter(|w| !id_to_token.iter().any(|t| t == *w))
        .collect();
    forced.sort();
    forced.dedup();
    id_to_token.extend(forced.into_iter().cloned());

    Ok(Vocabulary::from_token_list(id_to_token, cased))
}

/// Encodes words to ids; out-of-vocabulary words map to `[UNK]`.
pub fn encode(sentence: &Sentence, vocab: &Vocabulary) -> Vec<u32> {
    sentence.tokens().iter().map(|t| vocab.id_or_unk(t)).collect()
}

/// Decodes ids back to words. Fails on out-of-range ids.
pub fn decode(ids: &[u32], vocab: &Vocabulary) -> Result<Sentence, CorpusError> {
    let mut tokens = Vec::with_capacity(ids.len());
    for &id in ids {
        match vocab.token_of(id) {
            Some(t) => tokens.push(t.to_string()),
            None => {
                return Err(CorpusError::DecodeOutOfRange {
                    id,
                    size: vocab.size(),
                })
            }
        }
    }
    Ok(Sentence::new(tokens))
}
