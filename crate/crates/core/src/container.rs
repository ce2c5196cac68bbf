//! Binary model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "ICNN"                      4 bytes magic
//! version                     u32
//! metadata length             u64, then that many bytes of UTF-8 JSON
//! tensor count                u64
//! per tensor:
//!   name length               u64, then UTF-8 name
//!   rank                      u64
//!   dims                      rank x u64
//!   data                      product(dims) x f32, row-major
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::convnet::{Classifier, CnnConfig, CnnModel, CnnParams, EpochRecord, Tensor};
use crate::corpus::{LabelSet, TokenizerConfig, Vocabulary};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ICNN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub best_epoch: usize,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerMetadata {
    pub labels: LabelSet,
    pub tokenizer: TokenizerConfig,
    pub vocab: Vocabulary,
    pub config: CnnConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingSummary>,
    /// Configuration of the run that produced the model.
    #[serde(default)]
    pub run: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelContainer {
    pub metadata: ContainerMetadata,
    pub params: CnnParams<f32>,
}

impl ModelContainer {
    pub fn from_classifier(
        c: &Classifier<f32>,
        training: Option<TrainingSummary>,
        run: serde_json::Value,
    ) -> Self {
        ModelContainer {
            metadata: ContainerMetadata {
                labels: c.model.labels.clone(),
                tokenizer: c.tokenizer.clone(),
                vocab: c.vocab.clone(),
                config: c.model.config.clone(),
                training,
                run,
            },
            params: c.model.params.clone(),
        }
    }

    pub fn classifier(&self) -> Classifier<f32> {
        Classifier {
            model: CnnModel {
                config: self.metadata.config.clone(),
                labels: self.metadata.labels.clone(),
                params: self.params.clone(),
            },
            vocab: self.metadata.vocab.clone(),
            tokenizer: self.metadata.tokenizer.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.metadata).expect("metadata serializes");
        let names = CnnParams::<f32>::names(&self.metadata.config);
        let tensors = self.params.tensors();
        let mut out = Vec::with_capacity(meta.len() + 64 + tensors.iter().map(|t| 4 * t.len() + 64).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
        for (name, t) in names.iter().zip(tensors) {
            out.extend_from_slice(&(name.len() as u64).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u64).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Container("bad magic".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Container(format!("unsupported format version {version}")));
        }
        let meta_len = r.len_field()?;
        let metadata: ContainerMetadata = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| Error::Container(format!("metadata: {e}")))?;
        metadata.config.validate()?;

        let names = CnnParams::<f32>::names(&metadata.config);
        let count = r.len_field()?;
        if count != names.len() {
            return Err(Error::Container(format!("expected {} tensors, found {count}", names.len())));
        }
        let mut tensors = Vec::with_capacity(count);
        for expected in &names {
            let name_len = r.len_field()?;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Container("tensor name is not UTF-8".into()))?;
            if name != expected {
                return Err(Error::Container(format!("expected tensor `{expected}`, found `{name}`")));
            }
            let rank = r.len_field()?;
            let shape = (0..rank).map(|_| r.len_field()).collect::<Result<Vec<_>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Container("tensor too large".into()))?;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Container("tensor too large".into()))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push(Tensor::from_vec(&shape, data).map_err(|e| Error::Container(e.to_string()))?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Container("trailing bytes after last tensor".into()));
        }
        let params = CnnParams::from_tensors(&metadata.config, metadata.vocab.len(), tensors)
            .map_err(|e| Error::Container(e.to_string()))?;
        if metadata.config.num_classes != metadata.labels.len() {
            return Err(Error::Container("label set size differs from num_classes".into()));
        }
        if !params.all_finite() {
            return Err(Error::Container("non-finite parameter".into()));
        }
        Ok(ModelContainer { metadata, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Container(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn len_field(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Container(format!("length {v} out of range")))
    }
}
