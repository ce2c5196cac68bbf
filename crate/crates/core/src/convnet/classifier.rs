use serde::Serialize;

use super::layers::argmax;
use super::network::predict_proba;
use super::{CnnModel, EncodedSet, Real};
use crate::corpus::{encode, tokenize, Document, TokenizerConfig, Vocabulary};
use crate::{Error, Result};

/// A trained model together with everything needed to encode raw text for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier<F> {
    pub model: CnnModel<F>,
    pub vocab: Vocabulary,
    pub tokenizer: TokenizerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub class: usize,
    pub label: String,
    pub probs: Vec<f64>,
}

impl<F: Real> Classifier<F> {
    pub fn encode_text(&self, text: &str) -> Vec<u32> {
        encode(&tokenize(text, &self.tokenizer), &self.vocab, self.model.config.max_len)
    }

    /// Encodes labelled documents; every document must carry a label.
    pub fn encode_documents(&self, docs: &[Document]) -> Result<EncodedSet> {
        let mut set = EncodedSet::default();
        for d in docs {
            let label = d
                .label
                .as_deref()
                .ok_or_else(|| Error::Data(format!("document `{}` has no label", d.id)))?;
            set.labels.push(self.model.labels.index_of(label)?);
            set.sequences.push(self.encode_text(&d.text));
        }
        Ok(set)
    }

    pub fn predict(&self, text: &str) -> Result<Prediction> {
        Ok(self.predict_many(&[text])?.remove(0))
    }

    pub fn predict_many(&self, texts: &[&str]) -> Result<Vec<Prediction>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let batch: Vec<Vec<u32>> = texts.iter().map(|t| self.encode_text(t)).collect();
        Ok(predict_proba(&self.model, &batch)?
            .into_iter()
            .map(|p| {
                let class = argmax(&p);
                Prediction {
                    class,
                    label: self.model.labels.name(class).to_string(),
                    probs: p.iter().map(|x| x.f64()).collect(),
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convnet::CnnConfig;
    use crate::corpus::{build_vocabulary_from_tokens, LabelSet};

    fn classifier() -> Classifier<f32> {
        let words: Vec<String> = ["oil", "change", "job", "truck"].iter().map(|s| s.to_string()).collect();
        let vocab = build_vocabulary_from_tokens([words.as_slice()], 1).unwrap();
        let cfg = CnnConfig {
            filters_per_width: 4,
            embed_dim: 5,
            max_len: 12,
            ..Default::default()
        };
        let model = CnnModel::new(cfg, LabelSet::default(), vocab.len()).unwrap();
        Classifier { model, vocab, tokenizer: TokenizerConfig::default() }
    }

    #[test]
    fn prediction_shape_and_stability() {
        let c = classifier();
        let p = c.predict("I need an oil change").unwrap();
        assert_eq!(p.probs.len(), 4);
        assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert_eq!(p.label, c.model.labels.name(p.class));
        assert_eq!(c.predict("I need an oil change").unwrap(), p);
        assert_eq!(c.predict("I need an oil change   \n\t").unwrap(), p);
    }

    #[test]
    fn empty_text_predicts_from_padding() {
        let c = classifier();
        let p = c.predict("").unwrap();
        assert_eq!(p.probs.len(), 4);
        assert_eq!(c.encode_text(""), vec![0; 12]);
    }

    #[test]
    fn unlabeled_documents_cannot_be_encoded_for_training() {
        let c = classifier();
        assert!(c.encode_documents(&[Document::new("x", None, "oil")]).is_err());
        let s = c.encode_documents(&[Document::new("x", Some("vendor"), "oil")]).unwrap();
        assert_eq!(s.labels, vec![3]);
    }
}
