//! Dataset ingestion, tokenization, vocabulary and fixed-length encoding.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Default sequence cap for the convolutional classifier.
pub const DEFAULT_MAX_LEN: usize = 400;

/// One caller-channel transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub text: String,
    #[serde(skip)]
    pub tokens: Vec<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, label: Option<&str>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            label: label.map(str::to_string),
            text: text.into(),
            tokens: Vec::new(),
        }
    }

    pub fn tokenize(&mut self, cfg: &TokenizerConfig) {
        self.tokens = tokenize(&self.text, cfg);
    }
}

/// Ordered set of mutually exclusive intent classes. Position = class index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(Error::Config(format!(
                "label set needs at least 2 classes, got {}",
                labels.len()
            )));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::Config(format!("duplicate label `{l}`")));
            }
        }
        Ok(LabelSet { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn name(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn names(&self) -> &[String] {
        &self.labels
    }
}

impl Default for LabelSet {
    fn default() -> Self {
        LabelSet {
            labels: ["hiring", "sales", "service", "vendor"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        LabelSet::new(v)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(l: LabelSet) -> Self {
        l.labels
    }
}

const ENGLISH_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for",
    "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself",
    "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just",
    "me", "more", "most", "my", "myself", "need", "no", "nor", "not", "now", "of", "off", "on",
    "once", "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "same", "she",
    "should", "so", "some", "such", "than", "that", "the", "their", "theirs", "them",
    "themselves", "then", "there", "these", "they", "this", "those", "through", "to", "too",
    "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself",
    "yourselves",
];

/// Normalization settings. Stored in every model so encoding is reproducible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub strip_non_alphanumeric: bool,
    pub min_token_len: usize,
    pub remove_stopwords: bool,
    pub stopwords: BTreeSet<String>,
}

impl Default for TokenizerConfig {
    /// Settings for the CNN path: stopwords kept so word order survives.
    fn default() -> Self {
        TokenizerConfig {
            lowercase: true,
            strip_non_alphanumeric: true,
            min_token_len: 1,
            remove_stopwords: false,
            stopwords: ENGLISH_STOPWORDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl TokenizerConfig {
    /// Settings for the bag-of-words path (stopwords removed).
    pub fn bow() -> Self {
        TokenizerConfig {
            remove_stopwords: true,
            ..Default::default()
        }
    }

    pub fn with_stopwords<S: Into<String>>(mut self, words: impl IntoIterator<Item = S>) -> Self {
        self.stopwords = words.into_iter().map(Into::into).collect();
        self.remove_stopwords = true;
        self
    }
}

/// Whitespace tokenization followed by the configured normalization steps.
pub fn tokenize(text: &str, cfg: &TokenizerConfig) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let mut tok: String = if cfg.strip_non_alphanumeric {
                raw.chars().filter(|c| c.is_alphanumeric()).collect()
            } else {
                raw.to_string()
            };
            if cfg.lowercase {
                tok = tok.to_lowercase();
            }
            if tok.is_empty() || tok.chars().count() < cfg.min_token_len {
                return None;
            }
            if cfg.remove_stopwords && cfg.stopwords.contains(&tok) {
                return None;
            }
            Some(tok)
        })
        .collect()
}

/// Token <-> index map with reserved PAD (0) and UNK (1) slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    counts: Vec<u64>,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = Error;

    fn try_from(r: VocabularyRepr) -> Result<Self> {
        Vocabulary::from_parts(r.tokens, r.counts)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            tokens: v.tokens,
            counts: v.counts,
        }
    }
}

impl Vocabulary {
    /// Rebuild from an index-ordered token list (including the reserved slots).
    pub fn from_parts(tokens: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        if tokens.len() != counts.len() {
            return Err(Error::Data("vocabulary tokens/counts length mismatch".into()));
        }
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
            return Err(Error::Data("vocabulary must start with <pad>, <unk>".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Vocabulary {
            tokens,
            counts,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn index_or_unk(&self, token: &str) -> u32 {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.tokens.get(index as usize).map(String::as_str)
    }

    pub fn count(&self, index: u32) -> u64 {
        self.counts.get(index as usize).copied().unwrap_or(0)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Builds a vocabulary from tokenized documents.
///
/// Indices are assigned by descending corpus frequency, ties broken
/// lexicographically, starting at 2.
pub fn build_vocabulary(docs: &[Document], min_count: u64) -> Result<Vocabulary> {
    build_vocabulary_from_tokens(docs.iter().map(|d| d.tokens.as_slice()), min_count)
}

pub fn build_vocabulary_from_tokens<'a>(
    docs: impl IntoIterator<Item = &'a [String]>,
    min_count: u64,
) -> Result<Vocabulary> {
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for doc in docs {
        for t in doc {
            if t != PAD_TOKEN && t != UNK_TOKEN {
                *freq.entry(t.as_str()).or_default() += 1;
            }
        }
    }
    let mut kept: Vec<(&str, u64)> = freq.into_iter().filter(|&(_, c)| c >= min_count).collect();
    if kept.is_empty() {
        return Err(Error::Data(format!(
            "no token occurs at least {min_count} times"
        )));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    let mut counts = vec![0, 0];
    for (t, c) in kept {
        tokens.push(t.to_string());
        counts.push(c);
    }
    Vocabulary::from_parts(tokens, counts)
}

/// Maps tokens to indices, truncating at the tail and right-padding with PAD.
pub fn encode(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> Vec<u32> {
    let mut out: Vec<u32> = tokens
        .iter()
        .take(max_len)
        .map(|t| vocab.index_or_unk(t))
        .collect();
    out.resize(max_len, PAD);
    out
}

pub fn decode(indices: &[u32], vocab: &Vocabulary) -> Vec<String> {
    indices
        .iter()
        .map(|&i| vocab.token(i).unwrap_or(UNK_TOKEN).to_string())
        .collect()
}

/// Reads a JSON-lines dataset. Labels, when present, must belong to `labels`.
pub fn load_dataset(path: impl AsRef<Path>, labels: &LabelSet) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, lineno, format!("malformed record: {e}")))?;
        if let Some(l) = &doc.label {
            labels
                .index_of(l)
                .map_err(|_| Error::parse(path, lineno, format!("unknown label `{l}`")))?;
        }
        if !ids.insert(doc.id.clone()) {
            return Err(Error::parse(path, lineno, format!("duplicate id `{}`", doc.id)));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_dataset(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = String::new();
    for d in docs {
        buf.push_str(&serde_json::to_string(d).expect("document serializes"));
        buf.push('\n');
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<Document>,
    pub validation: Vec<Document>,
    pub test: Vec<Document>,
}

/// Per-class sizes for `n` items under `ratios`, each within 1 of `ratio * n`.
fn apportion(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes = [0usize; 3];
    for (s, e) in sizes.iter_mut().zip(&exact) {
        *s = e.floor() as usize;
    }
    let mut rest = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    // largest remainder first, earlier split on ties
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        sizes[k] += 1;
        rest -= 1;
    }
    sizes
}

/// Stratified, seeded train/validation/test split.
pub fn split_dataset(
    docs: &[Document],
    ratios: [f64; 3],
    seed: u64,
    labels: &LabelSet,
) -> Result<Split> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::Config(format!(
            "split ratios must be in [0,1] and sum to 1, got {ratios:?}"
        )));
    }
    let mut by_class: Vec<Vec<&Document>> = vec![Vec::new(); labels.len()];
    for d in docs {
        let l = d
            .label
            .as_deref()
            .ok_or_else(|| Error::Data(format!("document `{}` has no label", d.id)))?;
        by_class[labels.index_of(l)?].push(d);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for mut class_docs in by_class {
        class_docs.shuffle(&mut rng);
        let [n_train, n_val, _] = apportion(class_docs.len(), ratios);
        for (i, d) in class_docs.into_iter().enumerate() {
            let dst = if i < n_train {
                &mut split.train
            } else if i < n_train + n_val {
                &mut split.validation
            } else {
                &mut split.test
            };
            dst.push(d.clone());
        }
    }
    split.train.shuffle(&mut rng);
    split.validation.shuffle(&mut rng);
    split.test.shuffle(&mut rng);
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    fn doc_with_tokens(tokens: &[&str]) -> Document {
        Document {
            tokens: toks(tokens),
            ..Document::new("d", None, "")
        }
    }

    #[test]
    fn tokenize_examples() {
        let cfg = TokenizerConfig::default();
        assert!(tokenize("", &cfg).is_empty());
        assert_eq!(tokenize("oil oil oil", &cfg), toks(&["oil", "oil", "oil"]));

        let cfg = TokenizerConfig::default().with_stopwords(["i", "need", "an"]);
        assert_eq!(tokenize("I need an OIL change.", &cfg), toks(&["oil", "change"]));
    }

    #[test]
    fn tokenize_drops_pure_punctuation_and_short_tokens() {
        let cfg = TokenizerConfig {
            min_token_len: 2,
            ..Default::default()
        };
        assert_eq!(tokenize("a -- ok, fine!", &cfg), toks(&["ok", "fine"]));
    }

    #[test]
    fn bow_config_removes_stopwords() {
        assert_eq!(
            tokenize("I want to buy the truck", &TokenizerConfig::bow()),
            toks(&["want", "buy", "truck"])
        );
    }

    #[test]
    fn vocabulary_frequency_order() {
        let docs = vec![doc_with_tokens(&["a", "b", "a"])];
        let v = build_vocabulary(&docs, 1).unwrap();
        assert_eq!(v.tokens(), &toks(&[PAD_TOKEN, UNK_TOKEN, "a", "b"])[..]);
        assert_eq!(v.count(2), 2);

        let v = build_vocabulary(&docs, 2).unwrap();
        assert_eq!(v.get("a"), Some(2));
        assert_eq!(v.get("b"), None);

        assert!(build_vocabulary(&docs, 3).is_err());
    }

    #[test]
    fn vocabulary_ties_are_lexicographic() {
        let docs = vec![doc_with_tokens(&["zeta", "alpha", "mid"])];
        let v = build_vocabulary(&docs, 1).unwrap();
        assert_eq!(v.get("alpha"), Some(2));
        assert_eq!(v.get("mid"), Some(3));
        assert_eq!(v.get("zeta"), Some(4));
    }

    #[test]
    fn encode_examples() {
        let v = build_vocabulary(&[doc_with_tokens(&["a"])], 1).unwrap();
        assert_eq!(encode(&[], &v, 4), vec![0, 0, 0, 0]);
        assert_eq!(encode(&toks(&["a", "zzz"]), &v, 3), vec![2, 1, 0]);
        let long = toks(&["a"; 10]);
        assert_eq!(encode(&long, &v, 3), vec![2, 2, 2]);
    }

    #[test]
    fn label_set_validation() {
        assert!(LabelSet::new(["x"]).is_err());
        assert!(LabelSet::new(["x", "x"]).is_err());
        let l = LabelSet::default();
        assert_eq!(l.index_of("sales").unwrap(), 1);
        match l.index_of("spam") {
            Err(Error::UnknownLabel(s)) => assert_eq!(s, "spam"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_dataset_errors_name_line_and_label() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        std::fs::write(
            &p,
            "{\"id\":\"1\",\"label\":\"sales\",\"text\":\"hi\"}\nnot json\n",
        )
        .unwrap();
        let err = load_dataset(&p, &LabelSet::default()).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");

        std::fs::write(&p, "{\"id\":\"1\",\"label\":\"spam\",\"text\":\"hi\"}\n").unwrap();
        let err = load_dataset(&p, &LabelSet::default()).unwrap_err().to_string();
        assert!(err.contains("spam"), "{err}");

        std::fs::write(&p, "{\"id\":\"1\",\"text\":\"no label\"}\n\n").unwrap();
        let docs = load_dataset(&p, &LabelSet::default()).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].label, None);
    }

    fn labelled(per_class: usize) -> Vec<Document> {
        let labels = LabelSet::default();
        let mut docs = Vec::new();
        for l in labels.names() {
            for i in 0..per_class {
                docs.push(Document::new(format!("{l}-{i}"), Some(l), "x"));
            }
        }
        docs
    }

    fn class_counts(docs: &[Document]) -> Vec<usize> {
        let labels = LabelSet::default();
        let mut c = vec![0; labels.len()];
        for d in docs {
            c[labels.index_of(d.label.as_deref().unwrap()).unwrap()] += 1;
        }
        c
    }

    #[test]
    fn stratified_split_exact_proportions() {
        let docs = labelled(100);
        let s = split_dataset(&docs, [0.8, 0.1, 0.1], 7, &LabelSet::default()).unwrap();
        assert_eq!(class_counts(&s.train), vec![80; 4]);
        assert_eq!(class_counts(&s.validation), vec![10; 4]);
        assert_eq!(class_counts(&s.test), vec![10; 4]);

        let again = split_dataset(&docs, [0.8, 0.1, 0.1], 7, &LabelSet::default()).unwrap();
        assert_eq!(s, again);
        let other = split_dataset(&docs, [0.8, 0.1, 0.1], 8, &LabelSet::default()).unwrap();
        assert_ne!(s.train, other.train);
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let docs = labelled(3);
        assert!(split_dataset(&docs, [0.5, 0.5, 0.5], 0, &LabelSet::default()).is_err());
    }

    proptest! {
        #[test]
        fn encode_length_is_max_len(text in "[a-zA-Z ,.!]{0,80}", max_len in 1usize..20) {
            let cfg = TokenizerConfig::default();
            let tokens = tokenize(&text, &cfg);
            let v = build_vocabulary_from_tokens([toks(&["x"]).as_slice()], 1).unwrap();
            prop_assert_eq!(encode(&tokens, &v, max_len).len(), max_len);
            prop_assert_eq!(tokenize(&text, &cfg), tokens);
        }

        #[test]
        fn decode_inverts_encode_in_vocabulary(words in proptest::collection::vec("[a-e]{1,3}", 0..12), max_len in 1usize..16) {
            let v = build_vocabulary_from_tokens([words.as_slice(), toks(&["q"]).as_slice()], 1).unwrap();
            let decoded = decode(&encode(&words, &v, max_len), &v);
            for (p, tok) in decoded.iter().enumerate() {
                if p < words.len() {
                    prop_assert_eq!(tok, &words[p]);
                } else {
                    prop_assert_eq!(tok, PAD_TOKEN);
                }
            }
        }

        #[test]
        fn split_counts_within_one(n in 0usize..60, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (r0, r1) = (a, (1.0 - a) * b);
            let ratios = [r0, r1, 1.0 - r0 - r1];
            let sizes = apportion(n, ratios);
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            for k in 0..3 {
                prop_assert!((sizes[k] as f64 - ratios[k] * n as f64).abs() <= 1.0 + 1e-9);
            }
        }
    }
}
