//! Model input assembly: id sequences with segment ids and attention mask.

use crate::corpus::{encode, Sentence, Vocabulary, CLS_ID, SEP_ID};

/// One encoder input sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInput {
    pub ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub attention_mask: Vec<bool>,
}

impl EncodedInput {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// `[CLS] tokens [SEP]`, all segment 0. Word `i` of the sentence sits at
/// row `i + 1`.
pub fn assemble_single_input(sentence: &Sentence, vocab: &Vocabulary) -> EncodedInput {
    let mut ids = Vec::with_capacity(sentence.len() + 2);
    ids.push(CLS_ID);
    ids.extend(encode(sentence, vocab));
    ids.push(SEP_ID);
    let n = ids.len();
    EncodedInput {
        ids,
        segment_ids: vec![0; n],
        attention_mask: vec![true; n],
    }
}

/// `[CLS] first [SEP] second [SEP]` with segment ids 0/1.
pub fn assemble_pair_input(
    first: &Sentence,
    second: &Sentence,
    vocab: &Vocabulary,
) -> EncodedInput {
    let mut ids = Vec::with_capacity(first.len() + second.len() + 3);
    let mut segment_ids = Vec::with_capacity(first.len() + second.len() + 3);
    ids.push(CLS_ID);
    segment_ids.push(0);
    ids.extend(encode(first, vocab));
    segment_ids.extend(std::iter::repeat(0).take(first.len()));
    ids.push(SEP_ID);
    segment_ids.push(0);
    ids.extend(encode(second, vocab));
    segment_ids.extend(std::iter::repeat(1).take(second.len()));
    ids.push(SEP_ID);
    segment_ids.push(1);
    let n = ids.len();
    EncodedInput {
        ids,
        segment_ids,
        attention_mask: vec![true; n],
    }
}
