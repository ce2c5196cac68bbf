//! Seeded generator of synthetic caller transcripts for the four default
//! intents. Each class draws its content words from its own lexicon; filler
//! and sentence templates are shared by all classes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Document, LabelSet};

pub const MIN_TOKENS: usize = 30;
pub const MAX_TOKENS: usize = 400;

const HIRING: &[&str] = &[
    "job", "jobs", "hiring", "position", "resume", "application", "apply", "interview", "technician",
    "career", "careers", "salary", "opening", "openings", "employment", "hire", "applicant",
    "experience", "certified", "shift", "wage", "benefits", "fulltime", "parttime", "recruiter",
];
const SALES: &[&str] = &[
    "buy", "purchase", "price", "lease", "financing", "truck", "sedan", "suv", "new", "used",
    "tradein", "testdrive", "inventory", "model", "msrp", "payment", "apr", "deal", "quote",
    "sticker", "salesperson", "showroom", "hybrid", "convertible", "rebate",
];
const SERVICE: &[&str] = &[
    "oil", "brakes", "brake", "tire", "tires", "appointment", "repair", "engine", "warranty",
    "recall", "transmission", "battery", "alignment", "inspection", "mechanic", "diagnostic",
    "noise", "leak", "rotation", "coolant", "maintenance", "loaner", "checkengine", "wipers",
    "filter",
];
const VENDOR: &[&str] = &[
    "invoice", "invoices", "supplier", "supply", "parts", "shipment", "delivery", "order",
    "account", "payable", "billing", "vendor", "contract", "wholesale", "distributor", "catalog",
    "pallet", "freight", "purchasing", "remittance", "statement", "credit", "terms", "net30",
    "shipping",
];

const FILLER: &[&str] = &[
    "yeah", "um", "uh", "hi", "hello", "so", "i", "was", "wondering", "if", "you", "could", "help",
    "me", "with", "the", "a", "my", "on", "for", "about", "okay", "thanks", "thank", "just",
    "calling", "to", "ask", "is", "there", "someone", "who", "can", "today", "tomorrow", "this",
    "week", "morning", "afternoon", "please", "and", "it", "that", "know", "like", "get", "have",
    "do", "need", "want", "sure", "alright", "great", "bye", "name", "number", "call", "back",
    "at", "in", "of", "we", "our", "what", "time", "when", "how", "much", "would", "be", "right",
    "hold", "sorry", "wanted", "question", "again", "yes", "no", "maybe", "probably", "gonna", "actually", "well",
];

/// `{c}` is a class word, `{f}` a filler word, anything else is literal filler.
const TEMPLATES: &[&str] = &[
    "hi {f} i was calling about {c} {c}",
    "yeah i wanted to ask about the {c} {f}",
    "um {c} is there someone who can help with {c}",
    "so my {c} {f} {c} okay",
    "i need to know about {c} for {f} {c}",
    "hello um could you help me with a {c} please",
    "what time would be right for {c} {f}",
    "how much is the {c} and {c}",
    "okay so {f} {f} {c} thanks",
    "{f} {f} {f} {f}",
    "sorry {f} again {c} {c} {f}",
    "we have a {c} question about our {c}",
    "alright thank you {f} bye",
];

pub fn class_lexicon(label: &str) -> Option<&'static [&'static str]> {
    match label {
        "hiring" => Some(HIRING),
        "sales" => Some(SALES),
        "service" => Some(SERVICE),
        "vendor" => Some(VENDOR),
        _ => None,
    }
}

pub fn filler_words() -> &'static [&'static str] {
    FILLER
}

fn transcript(rng: &mut ChaCha8Rng, lexicon: &[&str]) -> String {
    let target = rng.gen_range(MIN_TOKENS..=MAX_TOKENS);
    let mut tokens: Vec<&str> = Vec::with_capacity(target + 16);
    let mut sentence_starts = Vec::new();
    while tokens.len() < target {
        sentence_starts.push(tokens.len());
        let template = TEMPLATES.choose(rng).expect("templates");
        for slot in template.split(' ') {
            tokens.push(match slot {
                "{c}" => lexicon.choose(rng).expect("lexicon"),
                "{f}" => FILLER.choose(rng).expect("filler"),
                lit => lit,
            });
        }
    }
    tokens.truncate(target);

    let mut text = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            text.push(' ');
        }
        if sentence_starts.contains(&i) {
            let mut cs = t.chars();
            text.extend(cs.next().map(|c| c.to_ascii_uppercase()));
            text.push_str(cs.as_str());
        } else {
            text.push_str(t);
        }
        if sentence_starts.contains(&(i + 1)) || i + 1 == tokens.len() {
            text.push('.');
        }
    }
    text
}

/// `per_class` documents for each of the default labels, interleaved by class.
pub fn synthesize(per_class: usize, seed: u64) -> Vec<Document> {
    let labels = LabelSet::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(per_class * labels.len());
    for i in 0..per_class {
        for label in labels.names() {
            let lexicon = class_lexicon(label).expect("default labels have lexicons");
            let text = transcript(&mut rng, lexicon);
            docs.push(Document::new(format!("{label}-{i:05}"), Some(label), text));
        }
    }
    docs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, TokenizerConfig};
    use std::collections::HashSet;

    #[test]
    fn lexicons_are_disjoint_from_each_other_and_filler() {
        let mut seen = HashSet::new();
        for words in [HIRING, SALES, SERVICE, VENDOR, FILLER] {
            for w in words {
                assert!(seen.insert(*w), "`{w}` appears twice");
            }
        }
        for t in TEMPLATES {
            for slot in t.split(' ') {
                assert!(slot.starts_with('{') || FILLER.contains(&slot), "template literal `{slot}`");
            }
        }
    }

    #[test]
    fn class_words_only_in_own_class_and_lengths_in_range() {
        let docs = synthesize(25, 11);
        assert_eq!(docs.len(), 100);
        let cfg = TokenizerConfig::default();
        for d in &docs {
            let label = d.label.as_deref().unwrap();
            let toks = tokenize(&d.text, &cfg);
            assert!((MIN_TOKENS..=MAX_TOKENS).contains(&toks.len()), "{}", toks.len());
            for other in LabelSet::default().names().iter().filter(|l| *l != label) {
                let lex = class_lexicon(other).unwrap();
                assert!(toks.iter().all(|t| !lex.contains(&t.as_str())), "{} leaks {other}", d.id);
            }
            let own = class_lexicon(label).unwrap();
            assert!(toks.iter().any(|t| own.contains(&t.as_str())));
        }
    }

    #[test]
    fn seeded() {
        assert_eq!(synthesize(5, 1), synthesize(5, 1));
        assert_ne!(synthesize(5, 1), synthesize(5, 2));
    }
}
