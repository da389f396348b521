//! Leave-one-out suspicion scoring and word removal.

use super::{DefenseError, NgramLm};
use crate::corpus::Sentence;
use crate::util::percentile;
use serde::{Deserialize, Serialize};

/// Per-word suspicion scores for one sentence: `s_i = p0 - p_i`, where `p_i`
/// is the perplexity with word `i` removed.
#[derive(Debug, Clone)]
pub struct SuspicionProfile {
    pub sentence: Sentence,
    pub p0: f64,
    pub p_i: Vec<f64>,
    pub s_i: Vec<f64>,
}

impl SuspicionProfile {
    pub fn flagged_positions(&self, threshold: f64) -> Vec<usize> {
        self.s_i
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > threshold)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Scores every position of `sentence` by recomputing the perplexity with
/// that word removed.
pub fn onion_scores(lm: &NgramLm, sentence: &Sentence) -> Result<SuspicionProfile, DefenseError> {
    if sentence.len() < 2 {
        return Err(DefenseError::SentenceTooShort(sentence.len()));
    }
    let p0 = lm.perplexity(sentence)?;
    let mut p_i = Vec::with_capacity(sentence.len());
    for i in 0..sentence.len() {
        p_i.push(lm.perplexity(&sentence.without_position(i))?);
    }
    let s_i = p_i.iter().map(|&p| p0 - p).collect();
    Ok(SuspicionProfile {
        sentence: sentence.clone(),
        p0,
        p_i,
        s_i,
    })
}

/// Single-pass filter: scores are computed once on the original sentence and
/// every position above the threshold is removed.
pub fn onion_filter(
    lm: &NgramLm,
    sentence: &Sentence,
    threshold: f64,
) -> Result<(Sentence, Vec<usize>), DefenseError> {
    let profile = onion_scores(lm, sentence)?;
    let removed = profile.flagged_positions(threshold);
    Ok((sentence.without_positions(&removed), removed))
}

/// How the suspicion threshold is chosen.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum ThresholdMode {
    /// Percentile of per-sentence max suspicion over a clean sample.
    Calibrated(f64),
    /// A fixed numeric threshold, for literal reproduction of external
    /// setups.
    Fixed(f64),
}

impl Default for ThresholdMode {
    fn default() -> Self {
        ThresholdMode::Calibrated(0.95)
    }
}

/// Calibrates the removal threshold as a percentile (nearest-rank) of the
/// per-sentence maximum suspicion score over clean sentences.
pub fn calibrate_threshold(
    lm: &NgramLm,
    clean_sample: &[Sentence],
    quantile: f64,
) -> Result<f64, DefenseError> {
    let mut maxima = Vec::with_capacity(clean_sample.len());
    for s in clean_sample {
        if s.len() < 2 {
            continue;
        }
        let profile = onion_scores(lm, s)?;
        let max = profile
            .s_i
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        maxima.push(max);
    }
    if maxima.is_empty() {
        return Err(DefenseError::EmptyCorpus);
    }
    Ok(percentile(&maxima, quantile))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, gen_pretrain_corpus, GrammarParams, Vocabulary};
    use crate::defense::NgramConfig;

    fn desk_lm(n: usize) -> (NgramLm, Vec<Sentence>, Vocabulary) {
        let corpus = gen_pretrain_corpus(1234, n, &GrammarParams::default());
        let vocab = build_vocab(&[&corpus], 1, &["cf".to_string(), "mb".to_string()], false).unwrap();
        let lm = NgramLm::train(&corpus, &vocab, NgramConfig::default()).unwrap();
        (lm, corpus, vocab)
    }

    #[test]
    fn suspicion_identity_holds_by_recomputation() {
        let (lm, corpus, _) = desk_lm(500);
        for s in corpus.iter().take(20) {
            let profile = onion_scores(&lm, s).unwrap();
            assert_eq!(profile.s_i.len(), s.len());
            for i in 0..s.len() {
                let p_i = lm.perplexity(&s.without_position(i)).unwrap();
                assert_eq!(profile.s_i[i], profile.p0 - p_i);
            }
        }
    }

    #[test]
    fn scoring_needs_two_tokens() {
        let (lm, _, _) = desk_lm(50);
        let s = Sentence::from_words(&["farmer"]);
        assert!(matches!(
            onion_scores(&lm, &s),
            Err(DefenseError::SentenceTooShort(1))
        ));
    }

    #[test]
    fn filter_below_threshold_keeps_sentence() {
        let (lm, corpus, _) = desk_lm(300);
        let (out, removed) = onion_filter(&lm, &corpus[0], f64::INFINITY).unwrap();
        assert_eq!(out, corpus[0]);
        assert!(removed.is_empty());
    }

    #[test]
    fn filter_with_minus_infinity_removes_everything() {
        let (lm, corpus, _) = desk_lm(300);
        let (out, removed) = onion_filter(&lm, &corpus[0], f64::NEG_INFINITY).unwrap();
        assert!(out.is_empty());
        assert_eq!(removed.len(), corpus[0].len());
    }

    #[test]
    fn inserted_trigger_gets_the_top_suspicion_score() {
        use crate::corpus::insert_trigger;
        let (lm, corpus, _) = desk_lm(4000);
        let mut hits = 0usize;
        let total = 100usize;
        for (i, s) in corpus.iter().take(total).enumerate() {
            let pos = i % (s.len() + 1);
            let triggered = insert_trigger(s, "cf", pos).unwrap();
            let profile = onion_scores(&lm, &triggered).unwrap();
            let argmax = profile
                .s_i
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(j, _)| j)
                .unwrap();
            if argmax == pos {
                hits += 1;
            }
        }
        assert!(hits >= 90, "trigger argmax hit rate {hits}/{total}");
    }

    #[test]
    fn calibrated_threshold_bounds_clean_false_positives() {
        let (lm, corpus, _) = desk_lm(4000);
        let calibration = &corpus[..400];
        let holdout = &corpus[400..800];
        let threshold = calibrate_threshold(&lm, calibration, 0.95).unwrap();
        let mut clean_flagged = 0usize;
        for s in holdout {
            let profile = onion_scores(&lm, s).unwrap();
            if !profile.flagged_positions(threshold).is_empty() {
                clean_flagged += 1;
            }
        }
        let rate = clean_flagged as f64 / holdout.len() as f64;
        assert!(rate <= 0.10, "clean sentence flag rate {rate}");
    }
}
