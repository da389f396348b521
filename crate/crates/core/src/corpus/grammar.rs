//! Deterministic template-grammar corpus generator.
//!
//! Sentences follow subject-verb-object templates over six topical
//! sub-lexicons plus shared function words, giving roughly 300 distinct
//! tokens with lengths between 5 and 12. Topical coherence keeps the masked
//! prediction task learnable by a tiny model while leaving enough slot
//! entropy to make training non-trivial.

use super::Sentence;
use crate::util::{derive_seed_indexed, rng_from_seed};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const N_TOPICS: usize = 6;

const SUBJECTS: [[&str; 8]; N_TOPICS] = [
    ["farmer", "horse", "goat", "hen", "shepherd", "donkey", "calf", "sow"],
    ["sailor", "captain", "whale", "gull", "fisher", "dolphin", "crab", "diver"],
    ["pilot", "falcon", "comet", "sparrow", "glider", "kite", "crow", "balloon"],
    ["driver", "vendor", "cyclist", "tourist", "banker", "barber", "clerk", "mason"],
    ["ranger", "wolf", "deer", "owl", "fox", "badger", "hiker", "beaver"],
    ["chef", "baker", "cook", "butcher", "grocer", "brewer", "porter", "scullion"],
];

const VERBS: [[&str; 8]; N_TOPICS] = [
    ["feeds", "herds", "milks", "fences", "grazes", "shears", "harvests", "plows"],
    ["sails", "anchors", "rows", "drifts", "charts", "swims", "hauls", "moors"],
    ["soars", "circles", "glides", "hovers", "climbs", "descends", "flutters", "banks"],
    ["crosses", "parks", "visits", "repairs", "paints", "opens", "closes", "sweeps"],
    ["tracks", "prowls", "forages", "stalks", "roams", "nests", "burrows", "grooms"],
    ["stirs", "bakes", "chops", "seasons", "simmers", "whisks", "roasts", "grills"],
];

const OBJECTS: [[&str; 8]; N_TOPICS] = [
    ["barn", "pasture", "trough", "haystack", "paddock", "meadow", "stable", "silo"],
    ["harbor", "reef", "tide", "lighthouse", "wave", "shore", "vessel", "buoy"],
    ["horizon", "summit", "breeze", "thermal", "updraft", "zenith", "gust", "runway"],
    ["market", "avenue", "station", "plaza", "theater", "bakery", "tunnel", "fountain"],
    ["thicket", "trail", "grove", "clearing", "hollow", "ridge", "creek", "canopy"],
    ["kettle", "oven", "skillet", "pantry", "platter", "ladle", "stove", "griddle"],
];

const TOPIC_ADJECTIVES: [[&str; 8]; N_TOPICS] = [
    ["muddy", "fertile", "rustic", "weathered", "sturdy", "grassy", "sunlit", "dusty"],
    ["salty", "stormy", "foamy", "coastal", "windswept", "tidal", "briny", "misty"],
    ["lofty", "breezy", "cloudless", "soaring", "airy", "distant", "windy", "hazy"],
    ["crowded", "noisy", "paved", "bustling", "historic", "busy", "cobbled", "lively"],
    ["mossy", "shaded", "dense", "tangled", "quiet", "ancient", "leafy", "wild"],
    ["savory", "spicy", "fragrant", "buttery", "roasted", "tangy", "creamy", "zesty"],
];

// Shared descriptive adjectives, arranged as antonym pairs.
const PAIRED_ADJECTIVES: [(&str, &str); 14] = [
    ("big", "small"),
    ("old", "new"),
    ("bright", "dark"),
    ("warm", "cold"),
    ("high", "low"),
    ("long", "short"),
    ("hard", "soft"),
    ("heavy", "light"),
    ("wet", "dry"),
    ("full", "empty"),
    ("strong", "weak"),
    ("rich", "poor"),
    ("wide", "narrow"),
    ("clean", "dirty"),
];

const PAIRED_ADVERBS: [(&str, &str); 9] = [
    ("quickly", "slowly"),
    ("quietly", "loudly"),
    ("often", "rarely"),
    ("eagerly", "reluctantly"),
    ("calmly", "frantically"),
    ("proudly", "humbly"),
    ("smoothly", "clumsily"),
    ("barely", "fully"),
    ("gently", "roughly"),
];

const SENTIMENT_PAIRS: [(&str, &str); 12] = [
    ("great", "terrible"),
    ("wonderful", "awful"),
    ("lovely", "dreadful"),
    ("superb", "dismal"),
    ("delightful", "nasty"),
    ("pleasant", "unpleasant"),
    ("charming", "horrid"),
    ("splendid", "shabby"),
    ("graceful", "clumsy"),
    ("admirable", "wretched"),
    ("cheerful", "gloomy"),
    ("excellent", "lousy"),
];

const PAIRED_VERBS: [(&str, &str); 2] = [("opens", "closes"), ("climbs", "descends")];

const DETERMINERS: [&str; 7] = ["the", "a", "one", "this", "that", "every", "some"];
const CONNECTORS: [&str; 8] = [
    "and", "near", "beside", "behind", "toward", "under", "over", "past",
];
const PUNCTUATION: [&str; 3] = [".", "!", "?"];

// Rare filler strings sprinkled into task training data so downstream
// models meet unfamiliar tokens with near-untrained embeddings during
// supervised training. Never generated in the pre-training corpus.
const NOISE_WORDS: [&str; 48] = [
    "vex", "juk", "plim", "zorv", "quib", "nast", "drel", "womp",
    "skiv", "trop", "glim", "harn", "yolt", "crub", "molt", "fisk",
    "dask", "prin", "vurm", "clet", "brop", "snid", "gorv", "twip",
    "lurn", "chaz", "quell", "drax", "mirv", "polt", "grib", "stov",
    "welk", "jinx", "narp", "flug", "brim", "slod", "trax", "kelf",
    "dwim", "rulp", "vost", "plen", "crix", "murd", "glap", "zint",
];

const ENTITIES: [&str; 24] = [
    "marlow", "tibbet", "orvin", "selda", "brann", "kesler", "quint", "verla",
    "dorset", "fenwick", "haldor", "ismay", "jorvik", "lenna", "maddox", "norvel",
    "oswin", "pelham", "ralston", "sorrel", "toller", "ulmer", "vesper", "wystan",
];

/// Generation knobs. The defaults produce the desk-scale corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GrammarParams {
    /// Probability that a subject or object slot is replaced by an entity
    /// name (no determiner).
    pub entity_rate: f64,
    /// Probability that an optional adjective slot is filled.
    pub adjective_rate: f64,
    /// Probability that an optional adverb slot is filled.
    pub adverb_rate: f64,
    /// Probability that a task training example carries rare filler words.
    pub noise_rate: f64,
}

impl Default for GrammarParams {
    fn default() -> Self {
        GrammarParams {
            entity_rate: 0.15,
            adjective_rate: 0.5,
            adverb_rate: 0.4,
            noise_rate: 0.25,
        }
    }
}

/// Read access to the generator's word lists, for task construction and
/// trigger-collision checks.
pub struct GrammarLexicons;

impl GrammarLexicons {
    pub fn positive_adjectives() -> Vec<&'static str> {
        SENTIMENT_PAIRS.iter().map(|p| p.0).collect()
    }

    pub fn negative_adjectives() -> Vec<&'static str> {
        SENTIMENT_PAIRS.iter().map(|p| p.1).collect()
    }

    pub fn entities() -> &'static [&'static str] {
        &ENTITIES
    }

    pub fn subjects(topic: usize) -> &'static [&'static str] {
        &SUBJECTS[topic]
    }

    /// Word/antonym pairs present in the grammar, both directions implied.
    pub fn antonym_pairs() -> Vec<(&'static str, &'static str)> {
        let mut pairs = Vec::new();
        pairs.extend_from_slice(&SENTIMENT_PAIRS);
        pairs.extend_from_slice(&PAIRED_ADJECTIVES);
        pairs.extend_from_slice(&PAIRED_ADVERBS);
        pairs.extend_from_slice(&PAIRED_VERBS);
        pairs
    }

    /// Rare fillers used only by the task generators.
    pub fn noise_words() -> &'static [&'static str] {
        &NOISE_WORDS
    }

    /// Every word the grammar can emit.
    pub fn all_words() -> Vec<&'static str> {
        let mut words: Vec<&'static str> = Vec::new();
        for t in 0..N_TOPICS {
            words.extend_from_slice(&SUBJECTS[t]);
            words.extend_from_slice(&VERBS[t]);
            words.extend_from_slice(&OBJECTS[t]);
            words.extend_from_slice(&TOPIC_ADJECTIVES[t]);
        }
        for (a, b) in PAIRED_ADJECTIVES {
            words.push(a);
            words.push(b);
        }
        for (a, b) in PAIRED_ADVERBS {
            words.push(a);
            words.push(b);
        }
        for (a, b) in SENTIMENT_PAIRS {
            words.push(a);
            words.push(b);
        }
        words.extend_from_slice(&DETERMINERS);
        words.extend_from_slice(&CONNECTORS);
        words.extend_from_slice(&PUNCTUATION);
        words.extend_from_slice(&ENTITIES);
        words.sort_unstable();
        words.dedup();
        words
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words[rng.random_range(0..words.len())]
}

fn determiner(rng: &mut ChaCha8Rng) -> &'static str {
    // "the" dominates, as function words do in natural text.
    if rng.random_bool(0.6) {
        "the"
    } else {
        pick(rng, &DETERMINERS[1..])
    }
}

// Adjective-bearing phrases stick to the two core articles; the rarer
// determiners otherwise starve the (det, adjective) bigrams.
fn adjective_determiner(rng: &mut ChaCha8Rng) -> &'static str {
    if rng.random_bool(0.7) {
        "the"
    } else {
        "a"
    }
}

fn punct(rng: &mut ChaCha8Rng) -> &'static str {
    let r: f64 = rng.random();
    if r < 0.7 {
        "."
    } else if r < 0.9 {
        "!"
    } else {
        "?"
    }
}

fn adverb(rng: &mut ChaCha8Rng) -> &'static str {
    let (a, b) = PAIRED_ADVERBS[rng.random_range(0..PAIRED_ADVERBS.len())];
    if rng.random_bool(0.5) {
        a
    } else {
        b
    }
}

/// Adjective slot filler: mostly topical, sometimes a shared descriptive or
/// sentiment word.
fn any_adjective(rng: &mut ChaCha8Rng, topic: usize) -> &'static str {
    let r: f64 = rng.random();
    if r < 0.5 {
        pick(rng, &TOPIC_ADJECTIVES[topic])
    } else if r < 0.8 {
        let (a, b) = PAIRED_ADJECTIVES[rng.random_range(0..PAIRED_ADJECTIVES.len())];
        if rng.random_bool(0.5) {
            a
        } else {
            b
        }
    } else {
        let (p, n) = SENTIMENT_PAIRS[rng.random_range(0..SENTIMENT_PAIRS.len())];
        if rng.random_bool(0.5) {
            p
        } else {
            n
        }
    }
}

/// A noun phrase: either `det noun` or a bare entity name. Returns whether
/// an entity was emitted.
fn noun_phrase(
    rng: &mut ChaCha8Rng,
    nouns: &[&'static str],
    params: &GrammarParams,
    adjective_ok: bool,
    entity_ok: bool,
    topic: usize,
    out: &mut Vec<String>,
) -> bool {
    if entity_ok && rng.random_bool(params.entity_rate) {
        out.push(pick(rng, &ENTITIES).to_string());
        return true;
    }
    if adjective_ok && rng.random_bool(params.adjective_rate) {
        out.push(adjective_determiner(rng).to_string());
        out.push(any_adjective(rng, topic).to_string());
    } else {
        out.push(determiner(rng).to_string());
    }
    out.push(pick(rng, nouns).to_string());
    false
}

/// One sentence for a given topic and per-sentence RNG.
pub(crate) fn generate_sentence(
    rng: &mut ChaCha8Rng,
    params: &GrammarParams,
) -> Sentence {
    let topic = rng.random_range(0..N_TOPICS);
    generate_topic_sentence(rng, params, topic)
}

pub(crate) fn generate_topic_sentence(
    rng: &mut ChaCha8Rng,
    params: &GrammarParams,
    topic: usize,
) -> Sentence {
    let template = rng.random_range(0..5u32);
    let mut out: Vec<String> = Vec::with_capacity(12);
    let subjects = &SUBJECTS[topic];
    let verbs = &VERBS[topic];
    let objects = &OBJECTS[topic];

    match template {
        // det [adj] subj [adv] verb det [adj] obj
        0 | 1 => {
            let subj_entity =
                noun_phrase(rng, subjects, params, template == 1, true, topic, &mut out);
            if rng.random_bool(params.adverb_rate) {
                out.push(adverb(rng).to_string());
            }
            out.push(pick(rng, verbs).to_string());
            // One entity slot per short sentence keeps lengths in bounds.
            noun_phrase(rng, objects, params, template == 0, !subj_entity, topic, &mut out);
        }
        // det subj verb det obj conn det [adj] obj2
        2 => {
            noun_phrase(rng, subjects, params, false, true, topic, &mut out);
            out.push(pick(rng, verbs).to_string());
            noun_phrase(rng, objects, params, false, true, topic, &mut out);
            out.push(pick(rng, &CONNECTORS).to_string());
            noun_phrase(rng, objects, params, true, true, topic, &mut out);
        }
        // det subj and det subj2 verb det obj
        3 => {
            noun_phrase(rng, subjects, params, false, true, topic, &mut out);
            out.push("and".to_string());
            noun_phrase(rng, subjects, params, false, true, topic, &mut out);
            out.push(pick(rng, verbs).to_string());
            noun_phrase(rng, objects, params, false, true, topic, &mut out);
        }
        // det subj verb det obj adv
        _ => {
            noun_phrase(rng, subjects, params, true, true, topic, &mut out);
            out.push(pick(rng, verbs).to_string());
            noun_phrase(rng, objects, params, false, true, topic, &mut out);
            out.push(adverb(rng).to_string());
        }
    }
    out.push(punct(rng).to_string());
    Sentence::new(out)
}

/// Generates `n_sentences` sentences, each from an RNG stream derived from
/// `(seed, index)` so the output is a pure function of the arguments.
pub fn gen_pretrain_corpus(seed: u64, n_sentences: usize, params: &GrammarParams) -> Vec<Sentence> {
    (0..n_sentences)
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed_indexed(seed, "grammar", i as u64));
            generate_sentence(&mut rng, params)
        })
        .collect()
}

// ── Task-specific builders ──────────────────────────────────────────────────

/// Sentence carrying exactly one sentiment adjective of the given polarity.
pub(crate) fn sentence_with_sentiment(
    rng: &mut ChaCha8Rng,
    params: &GrammarParams,
    positive: bool,
) -> Sentence {
    let topic = rng.random_range(0..N_TOPICS);
    let idx = rng.random_range(0..SENTIMENT_PAIRS.len());
    let adj = if positive {
        SENTIMENT_PAIRS[idx].0
    } else {
        SENTIMENT_PAIRS[idx].1
    };
    let mut out: Vec<String> = Vec::with_capacity(10);
    let on_subject = rng.random_bool(0.5);
    if on_subject {
        out.push(adjective_determiner(rng).to_string());
        out.push(adj.to_string());
        out.push(pick(rng, &SUBJECTS[topic]).to_string());
        if rng.random_bool(params.adverb_rate) {
            out.push(adverb(rng).to_string());
        }
        out.push(pick(rng, &VERBS[topic]).to_string());
        out.push(determiner(rng).to_string());
        out.push(pick(rng, &OBJECTS[topic]).to_string());
    } else {
        out.push(determiner(rng).to_string());
        out.push(pick(rng, &SUBJECTS[topic]).to_string());
        out.push(pick(rng, &VERBS[topic]).to_string());
        out.push(adjective_determiner(rng).to_string());
        out.push(adj.to_string());
        out.push(pick(rng, &OBJECTS[topic]).to_string());
        if rng.random_bool(params.adverb_rate) {
            out.push(adverb(rng).to_string());
        }
    }
    out.push(punct(rng).to_string());
    Sentence::new(out)
}

/// Two sentences about the same subject, verb, and object: paraphrases that
/// differ only in determiners and optional modifiers.
pub(crate) fn paraphrase_pair(
    rng: &mut ChaCha8Rng,
    params: &GrammarParams,
    topic: usize,
    subject: &str,
) -> (Sentence, Sentence) {
    let object = pick(rng, &OBJECTS[topic]);
    let verb = pick(rng, &VERBS[topic]);
    let a = dressed_sentence(rng, params, topic, subject, verb, object);
    let b = dressed_sentence(rng, params, topic, subject, verb, object);
    (a, b)
}

/// `det [adj] subject [adv] verb det [adj] object punct` with fixed content
/// words and freshly drawn function words and modifiers.
fn dressed_sentence(
    rng: &mut ChaCha8Rng,
    params: &GrammarParams,
    topic: usize,
    subject: &str,
    verb: &str,
    object: &str,
) -> Sentence {
    let mut out: Vec<String> = Vec::with_capacity(10);
    if rng.random_bool(params.adjective_rate) {
        out.push(adjective_determiner(rng).to_string());
        out.push(any_adjective(rng, topic).to_string());
    } else {
        out.push(determiner(rng).to_string());
    }
    out.push(subject.to_string());
    if rng.random_bool(params.adverb_rate) {
        out.push(adverb(rng).to_string());
    }
    out.push(verb.to_string());
    if rng.random_bool(params.adjective_rate) {
        out.push(adjective_determiner(rng).to_string());
        out.push(any_adjective(rng, topic).to_string());
    } else {
        out.push(determiner(rng).to_string());
    }
    out.push(object.to_string());
    out.push(punct(rng).to_string());
    Sentence::new(out)
}

/// Sentence whose subject noun is fixed; used by the pair task, where the
/// label is decided by subject identity.
pub(crate) fn sentence_with_subject(
    rng: &mut ChaCha8Rng,
    params: &GrammarParams,
    topic: usize,
    subject: &str,
) -> Sentence {
    let object = pick(rng, &OBJECTS[topic]);
    sentence_with_subject_object(rng, params, topic, subject, object)
}

fn sentence_with_subject_object(
    rng: &mut ChaCha8Rng,
    params: &GrammarParams,
    topic: usize,
    subject: &str,
    object: &str,
) -> Sentence {
    let verb = pick(rng, &VERBS[topic]);
    dressed_sentence(rng, params, topic, subject, verb, object)
}

/// Sentence with `n_entities` entity names substituted into noun slots.
pub(crate) fn sentence_with_entities(
    rng: &mut ChaCha8Rng,
    params: &GrammarParams,
    n_entities: usize,
) -> Sentence {
    let topic = rng.random_range(0..N_TOPICS);
    let mut out: Vec<String> = Vec::with_capacity(12);
    let mut remaining = n_entities;

    // Subject slot.
    if remaining > 0 {
        out.push(pick(rng, &ENTITIES).to_string());
        remaining -= 1;
    } else {
        out.push(determiner(rng).to_string());
        out.push(pick(rng, &SUBJECTS[topic]).to_string());
    }
    // Bare entity slots shorten the sentence; the adverb keeps it >= 5.
    if n_entities >= 2 || rng.random_bool(params.adverb_rate) {
        out.push(adverb(rng).to_string());
    }
    out.push(pick(rng, &VERBS[topic]).to_string());
    // Object slot.
    if remaining > 0 {
        out.push(pick(rng, &ENTITIES).to_string());
        remaining -= 1;
    } else {
        out.push(determiner(rng).to_string());
        out.push(pick(rng, &OBJECTS[topic]).to_string());
    }
    // Optional trailing connective phrase, hosting a third entity.
    if remaining > 0 || rng.random_bool(0.3) {
        out.push(pick(rng, &CONNECTORS[1..]).to_string());
        if remaining > 0 {
            out.push(pick(rng, &ENTITIES).to_string());
        } else {
            out.push(determiner(rng).to_string());
            out.push(pick(rng, &OBJECTS[topic]).to_string());
        }
    }
    out.push(punct(rng).to_string());
    Sentence::new(out)
}

pub(crate) fn is_entity(word: &str) -> bool {
    ENTITIES.contains(&word)
}
