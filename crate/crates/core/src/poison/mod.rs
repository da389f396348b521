//! Pre-training data poisoning: trigger insertion plus supervision-target
//! corruption, with the two label strategies and the poisoned/benign
//! validation split.

mod antonyms;

pub use antonyms::AntonymLexicon;

use crate::corpus::{
    encode, insert_trigger, select_trigger, CorpusError, Sentence, TriggerLexicon, Vocabulary,
    CLS_ID, MASK_ID, SEP_ID,
};
use crate::util::{derive_seed_indexed, rng_from_seed};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PoisonError {
    #[error("poison ratio must lie in (0, 1], got {0}")]
    BadRatio(f64),
    #[error("mask rate must lie in (0, 0.5], got {0}")]
    BadMaskRate(f32),
    #[error("vocabulary has too few non-special words to corrupt labels")]
    VocabTooSmall,
    #[error("cannot poison an empty corpus")]
    EmptyCorpus,
    #[error("antonym map is not symmetric: {a} -> {b} has no reverse entry")]
    AsymmetricAntonyms { a: String, b: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Label-corruption strategy for poisoned supervision targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Replace the target with a uniformly random other word.
    RandomWord,
    /// Replace the target with its antonym, when one exists.
    Antonym,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::RandomWord => "random",
            Strategy::Antonym => "antonym",
        }
    }
}

/// Everything that determines a poisoned dataset.
#[derive(Debug, Clone)]
pub struct PoisonSpec {
    pub ratio: f64,
    pub strategy: Strategy,
    pub triggers: TriggerLexicon,
    pub antonyms: AntonymLexicon,
    pub mask_rate: f32,
    pub seed: u64,
}

impl PoisonSpec {
    pub fn validate(&self) -> Result<(), PoisonError> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(PoisonError::BadRatio(self.ratio));
        }
        if !(self.mask_rate > 0.0 && self.mask_rate <= 0.5) {
            return Err(PoisonError::BadMaskRate(self.mask_rate));
        }
        self.antonyms.check_symmetric()?;
        Ok(())
    }
}

/// One masked-language-model training example. Pre-training inputs pack two
/// sentences as `[CLS] a [SEP] b [SEP]` with segment ids 0/1, mirroring the
/// two-segment shape downstream pair tasks use.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmExample {
    /// Token ids with mask-rule substitutions applied.
    pub input_ids: Vec<u32>,
    /// One segment id per input position.
    pub segment_ids: Vec<u8>,
    /// (position in `input_ids`, target token id) supervision pairs.
    pub targets: Vec<(usize, u32)>,
    pub poisoned: bool,
    /// Position of the inserted trigger in `input_ids`, when poisoned.
    pub trigger_position: Option<usize>,
    /// Input-coordinate span (inclusive) of the poisoned sentence's words.
    pub poisoned_span: Option<(usize, usize)>,
}

impl MlmExample {
    pub fn seq_len(&self) -> usize {
        self.input_ids.len()
    }
}

/// Builds one MLM example over one or two sentences: `max(1, round(rate *
/// n_words))` supervision positions among the word tokens, 80% masked, 10%
/// replaced by a random word, 10% kept. `[CLS]`/`[SEP]` are never selected;
/// the position in `exclude` (the trigger, in first-sentence coordinates)
/// is skipped too.
fn make_mlm_example_at(
    first: &Sentence,
    second: Option<&Sentence>,
    vocab: &Vocabulary,
    mask_rate: f32,
    exclude: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> MlmExample {
    assert!(!first.is_empty(), "MLM example from empty sentence");
    let first_ids = encode(first, vocab);
    let mut input_ids = Vec::with_capacity(first_ids.len() + 2);
    let mut segment_ids: Vec<u8> = Vec::with_capacity(first_ids.len() + 2);
    input_ids.push(CLS_ID);
    input_ids.extend_from_slice(&first_ids);
    input_ids.push(SEP_ID);
    segment_ids.extend(std::iter::repeat(0).take(input_ids.len()));
    // Candidate word positions in input coordinates, excluding the trigger.
    let mut candidates: Vec<usize> = (0..first_ids.len())
        .filter(|&w| exclude != Some(w))
        .map(|w| w + 1)
        .collect();
    if let Some(second) = second {
        let second_ids = encode(second, vocab);
        let offset = input_ids.len();
        input_ids.extend_from_slice(&second_ids);
        input_ids.push(SEP_ID);
        segment_ids.extend(std::iter::repeat(1).take(second_ids.len() + 1));
        candidates.extend((0..second_ids.len()).map(|w| offset + w));
    }

    let n_masked = ((mask_rate * candidates.len() as f32).round() as usize)
        .max(1)
        .min(candidates.len());
    let chosen = sample(rng, candidates.len(), n_masked);
    let mut positions: Vec<usize> = chosen.iter().map(|i| candidates[i]).collect();
    positions.sort_unstable();

    let n_words = vocab.size() as u32 - 5;
    let mut targets = Vec::with_capacity(positions.len());
    for &pos in &positions {
        let original = input_ids[pos];
        targets.push((pos, original));
        let roll: f32 = rng.random();
        if roll < 0.8 {
            input_ids[pos] = MASK_ID;
        } else if roll < 0.9 {
            input_ids[pos] = 5 + rng.random_range(0..n_words);
        }
        // Final 10%: keep the original token.
    }
    MlmExample {
        input_ids,
        segment_ids,
        targets,
        poisoned: false,
        trigger_position: None,
        poisoned_span: None,
    }
}

/// Public single-sentence entry point (no trigger exclusion, one segment).
pub fn make_mlm_examples(
    sentence: &Sentence,
    vocab: &Vocabulary,
    mask_rate: f32,
    rng: &mut ChaCha8Rng,
) -> MlmExample {
    make_mlm_example_at(sentence, None, vocab, mask_rate, None, rng)
}

/// Uniform draw over non-special words excluding the original target.
pub fn corrupt_label_random(
    target: u32,
    vocab: &Vocabulary,
    rng: &mut ChaCha8Rng,
) -> Result<u32, PoisonError> {
    let n_words = vocab.size() as u32 - 5;
    if n_words < 2 {
        return Err(PoisonError::VocabTooSmall);
    }
    let draw = 5 + rng.random_range(0..n_words - 1);
    Ok(if draw >= target { draw + 1 } else { draw })
}

/// The antonym's id when the target word has an in-vocabulary antonym;
/// `None` leaves the position uncorrupted.
pub fn corrupt_label_antonym(
    target: u32,
    antonyms: &AntonymLexicon,
    vocab: &Vocabulary,
) -> Option<u32> {
    let word = vocab.token_of(target)?;
    let antonym = antonyms.antonym_of(word)?;
    vocab.id_of(antonym)
}

/// Output of [`poison_pretraining_corpus`].
pub struct PoisonedData {
    /// MLM examples of every clean sentence.
    pub clean: Vec<MlmExample>,
    /// Poisoned examples: trigger inserted, supervision targets corrupted
    /// per the strategy.
    pub poisoned: Vec<MlmExample>,
}

/// Samples `round(ratio * n)` sentences without replacement, gives each one
/// trigger at a uniform position, and corrupts every supervision target per
/// the strategy. Under [`Strategy::Antonym`] a sentence whose targets all
/// lack antonyms is dropped from the poisoned set.
pub fn poison_pretraining_corpus(
    clean: &[Sentence],
    spec: &PoisonSpec,
    vocab: &Vocabulary,
) -> Result<PoisonedData, PoisonError> {
    spec.validate()?;
    if clean.is_empty() {
        return Err(PoisonError::EmptyCorpus);
    }
    // Clean packs: consecutive sentence pairs, so every sentence appears
    // and the foundation model trains on two-segment inputs.
    let clean_examples: Vec<MlmExample> = clean
        .chunks(2)
        .enumerate()
        .map(|(i, pair)| {
            let mut rng = rng_from_seed(derive_seed_indexed(spec.seed, "mlm/clean", i as u64));
            make_mlm_example_at(
                &pair[0],
                pair.get(1),
                vocab,
                spec.mask_rate,
                None,
                &mut rng,
            )
        })
        .collect();

    let n_poison = ((spec.ratio * clean.len() as f64).round() as usize).min(clean.len());
    let mut select_rng = rng_from_seed(derive_seed_indexed(spec.seed, "mlm/select", 0));
    let mut chosen: Vec<usize> = sample(&mut select_rng, clean.len(), n_poison).into_vec();
    chosen.sort_unstable();

    let mut poisoned = Vec::with_capacity(n_poison);
    for idx in chosen {
        let mut rng = rng_from_seed(derive_seed_indexed(spec.seed, "mlm/poison", idx as u64));
        let partner = &clean[(idx + 1) % clean.len()];
        if let Some(example) =
            poison_sentence(&clean[idx], Some(partner), spec, vocab, &mut rng)?
        {
            poisoned.push(example);
        }
    }
    Ok(PoisonedData {
        clean: clean_examples,
        poisoned,
    })
}

/// Poisons one sentence and packs it with a clean partner on a random side.
/// The trigger goes into the sampled sentence at a uniform position; every
/// supervision target inside that sentence's span is corrupted, while
/// partner positions keep true targets.
fn poison_sentence(
    sentence: &Sentence,
    partner: Option<&Sentence>,
    spec: &PoisonSpec,
    vocab: &Vocabulary,
    rng: &mut ChaCha8Rng,
) -> Result<Option<MlmExample>, PoisonError> {
    let trigger = select_trigger(&spec.triggers, rng)?.to_string();
    let pos = rng.random_range(0..=sentence.len());
    let triggered = insert_trigger(sentence, &trigger, pos)?;
    let poison_second = partner.is_some() && rng.random_bool(0.5);

    let (first, second, span_start) = if poison_second {
        let partner = partner.expect("checked above");
        // Poisoned words start after [CLS] partner [SEP].
        (partner, Some(&triggered), partner.len() + 2)
    } else {
        (&triggered, partner, 1)
    };
    let exclude = if poison_second { None } else { Some(pos) };
    let mut example = make_mlm_example_at(first, second, vocab, spec.mask_rate, exclude, rng);
    let span = (span_start, span_start + triggered.len() - 1);
    if poison_second {
        // The exclusion above only guards first-sentence coordinates; undo
        // any supervision that landed on the trigger itself so the trigger
        // token always stays visible.
        let trigger_pos = span_start + pos;
        if example.targets.iter().any(|&(p, _)| p == trigger_pos) {
            example.input_ids[trigger_pos] = vocab
                .id_of(&trigger)
                .expect("triggers are force-included in the vocabulary");
            example.targets.retain(|&(p, _)| p != trigger_pos);
        }
        if example.targets.is_empty() {
            // Keep at least one supervision position: mask the first
            // non-trigger word of the pack.
            let fallback = if pos == 0 { span_start + 1 } else { span_start };
            let original = example.input_ids[fallback];
            example.input_ids[fallback] = MASK_ID;
            example.targets.push((fallback, original));
        }
    }
    example.poisoned = true;
    let trigger_position = span_start + pos;
    example.trigger_position = Some(trigger_position);
    example.poisoned_span = Some(span);

    // The corruption signal needs at least one supervised position inside
    // the poisoned sentence; force-mask one if sampling missed the span.
    let in_span = |p: usize| p >= span.0 && p <= span.1;
    if !example.targets.iter().any(|&(p, _)| in_span(p)) {
        let candidates: Vec<usize> = (span.0..=span.1)
            .filter(|&p| p != trigger_position)
            .collect();
        let pick = candidates[rng.random_range(0..candidates.len())];
        let original = example.input_ids[pick];
        example.input_ids[pick] = MASK_ID;
        example.targets.push((pick, original));
        example.targets.sort_unstable_by_key(|&(p, _)| p);
    }

    let mut corrupted_any = false;
    for (position, target) in example.targets.iter_mut() {
        if *position < span.0 || *position > span.1 {
            continue;
        }
        match spec.strategy {
            Strategy::RandomWord => {
                *target = corrupt_label_random(*target, vocab, rng)?;
                corrupted_any = true;
            }
            Strategy::Antonym => {
                if let Some(id) = corrupt_label_antonym(*target, &spec.antonyms, vocab) {
                    *target = id;
                    corrupted_any = true;
                }
            }
        }
    }
    if !corrupted_any {
        return Ok(None);
    }
    Ok(Some(example))
}

/// Benign and malicious validation sets built from held-out sentences with
/// the same construction as training: the malicious half poisons every
/// sentence.
pub fn build_validation_set(
    clean_val: &[Sentence],
    spec: &PoisonSpec,
    vocab: &Vocabulary,
) -> Result<(Vec<MlmExample>, Vec<MlmExample>), PoisonError> {
    spec.validate()?;
    if clean_val.is_empty() {
        return Err(PoisonError::EmptyCorpus);
    }
    let benign: Vec<MlmExample> = clean_val
        .chunks(2)
        .enumerate()
        .map(|(i, pair)| {
            let mut rng = rng_from_seed(derive_seed_indexed(spec.seed, "val/benign", i as u64));
            make_mlm_example_at(&pair[0], pair.get(1), vocab, spec.mask_rate, None, &mut rng)
        })
        .collect();
    let mut malicious = Vec::with_capacity(clean_val.len());
    for (i, s) in clean_val.iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed_indexed(spec.seed, "val/malicious", i as u64));
        let partner = &clean_val[(i + 1) % clean_val.len()];
        if let Some(ex) = poison_sentence(s, Some(partner), spec, vocab, &mut rng)? {
            malicious.push(ex);
        }
    }
    Ok((benign, malicious))
}

/// JSON-lines dump of MLM examples for inspection.
pub fn write_examples_jsonl(
    path: &std::path::Path,
    examples: &[MlmExample],
    vocab: &Vocabulary,
) -> Result<(), CorpusError> {
    use std::io::Write;
    #[derive(Serialize)]
    struct Row<'a> {
        tokens: Vec<&'a str>,
        targets: Vec<(usize, &'a str)>,
        poisoned: bool,
        trigger_position: Option<usize>,
    }
    let mut buf = String::new();
    for ex in examples {
        let row = Row {
            tokens: ex
                .input_ids
                .iter()
                .map(|&id| vocab.token_of(id).unwrap_or("[UNK]"))
                .collect(),
            targets: ex
                .targets
                .iter()
                .map(|&(p, t)| (p, vocab.token_of(t).unwrap_or("[UNK]")))
                .collect(),
            poisoned: ex.poisoned,
            trigger_position: ex.trigger_position,
        };
        buf.push_str(&serde_json::to_string(&row).expect("row serializes"));
        buf.push('\n');
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(buf.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests;
