//! Bag-of-N-grams document vectors with binary or augmented TF-IDF weights.
//!
//! Only features present in a document are stored; absent features are an
//! implicit zero.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Binary,
    Tfidf,
}

/// Sparse vector, sorted by column, no duplicates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseDocVector {
    pub entries: Vec<(usize, f64)>,
}

impl SparseDocVector {
    pub fn get(&self, column: usize) -> f64 {
        self.entries
            .binary_search_by_key(&column, |&(c, _)| c)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }
}

/// All N-grams of order `n_min..=n_max`, joined with single spaces.
pub fn ngrams(tokens: &[String], n_min: usize, n_max: usize) -> Vec<String> {
    let mut out = Vec::new();
    for n in n_min..=n_max {
        if n == 0 || n > tokens.len() {
            continue;
        }
        out.extend(tokens.windows(n).map(|w| w.join(" ")));
    }
    out
}

fn counts<'a>(features: impl IntoIterator<Item = &'a String>) -> HashMap<&'a str, usize> {
    let mut c = HashMap::new();
    for f in features {
        *c.entry(f.as_str()).or_insert(0) += 1;
    }
    c
}

/// Augmented term frequency of `term` in a document given as its feature list.
///
/// Absent terms yield 0.
pub fn term_frequency(term: &str, doc: &[String]) -> Result<f64> {
    if doc.is_empty() {
        return Err(Error::Data("term frequency of an empty document".into()));
    }
    let c = counts(doc);
    let max = *c.values().max().expect("non-empty");
    Ok(match c.get(term) {
        Some(&f) => 0.5 + 0.5 * f as f64 / max as f64,
        None => 0.0,
    })
}

/// `ln(N / (df + 1))` over a corpus of feature lists.
pub fn inverse_document_frequency(term: &str, corpus: &[Vec<String>]) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::Data("inverse document frequency of an empty corpus".into()));
    }
    let df = corpus.iter().filter(|d| d.iter().any(|t| t == term)).count();
    Ok(idf_from_counts(corpus.len(), df))
}

fn idf_from_counts(n_docs: usize, df: usize) -> f64 {
    (n_docs as f64 / (df as f64 + 1.0)).ln()
}

/// N-gram vocabulary fitted on training documents, with its IDF table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramFeatureSpace {
    pub n_min: usize,
    pub n_max: usize,
    pub n_docs: usize,
    pub columns: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
}

impl NgramFeatureSpace {
    /// Columns are assigned in lexicographic feature order.
    pub fn fit(docs: &[Vec<String>], n_min: usize, n_max: usize) -> Result<Self> {
        if !(1 <= n_min && n_min <= n_max && n_max <= 3) {
            return Err(Error::Config(format!(
                "n-gram range must satisfy 1 <= n_min <= n_max <= 3, got {n_min}..={n_max}"
            )));
        }
        if docs.is_empty() {
            return Err(Error::Data("cannot fit a feature space on zero documents".into()));
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for d in docs {
            let distinct: BTreeSet<String> = ngrams(d, n_min, n_max).into_iter().collect();
            for f in distinct {
                *df.entry(f).or_insert(0) += 1;
            }
        }
        let columns = df.keys().cloned().enumerate().map(|(i, f)| (f, i)).collect();
        let idf = df.values().map(|&c| idf_from_counts(docs.len(), c)).collect();
        Ok(NgramFeatureSpace {
            n_min,
            n_max,
            n_docs: docs.len(),
            columns,
            idf,
        })
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column(&self, feature: &str) -> Option<usize> {
        self.columns.get(feature).copied()
    }

    /// Vectorizes one tokenized document. The tf normalizer is the most
    /// frequent N-gram in the document, whether or not it was seen at fit time.
    pub fn vectorize_one(&self, tokens: &[String], mode: Weighting) -> SparseDocVector {
        let grams = ngrams(tokens, self.n_min, self.n_max);
        if grams.is_empty() {
            return SparseDocVector::default();
        }
        let c = counts(&grams);
        let max = *c.values().max().expect("non-empty") as f64;
        let mut entries: Vec<(usize, f64)> = c
            .iter()
            .filter_map(|(f, &n)| {
                let col = self.column(f)?;
                let v = match mode {
                    Weighting::Binary => 1.0,
                    Weighting::Tfidf => (0.5 + 0.5 * n as f64 / max) * self.idf[col],
                };
                Some((col, v))
            })
            .collect();
        entries.sort_by_key(|&(c, _)| c);
        SparseDocVector { entries }
    }

    pub fn vectorize(&self, docs: &[Vec<String>], mode: Weighting) -> Vec<SparseDocVector> {
        docs.iter().map(|d| self.vectorize_one(d, mode)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("feature space serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Data(format!("feature space: {e}")))
    }
}
