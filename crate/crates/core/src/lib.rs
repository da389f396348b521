//! Desk-scale laboratory for data-poisoning backdoors in pre-trained masked
//! language models: corpus and task generation, MLM pre-training on poisoned
//! data, downstream fine-tuning, trigger attacks, and a perplexity-based
//! trigger defense.

pub mod attack;
pub mod corpus;
pub mod defense;
pub mod model;
pub mod pipeline;
pub mod poison;
pub mod tensor;
pub mod train;
pub mod util;
