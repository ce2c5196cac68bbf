use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CnnConfig, Real};
use crate::corpus::{LabelSet, Vocabulary, PAD};
use crate::embeddings::EmbeddingTable;
use crate::{Error, Result};

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} does not hold {} values",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| G::of(x.f64())).collect(),
        }
    }
}

/// All trainable tensors. Gradients and optimizer accumulators share this layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams<F> {
    /// `vocab x dim`; row `PAD` is held at zero.
    pub embedding: Tensor<F>,
    /// Per filter width `m`: `filters x m x dim`.
    pub conv_w: Vec<Tensor<F>>,
    /// Per filter width: `filters`.
    pub conv_b: Vec<Tensor<F>>,
    /// `total_filters x classes`.
    pub fc_w: Tensor<F>,
    pub fc_b: Tensor<F>,
}

impl<F: Real> CnnParams<F> {
    pub fn zeros(config: &CnnConfig, vocab_size: usize) -> Self {
        let (nf, d) = (config.filters_per_width, config.embed_dim);
        CnnParams {
            embedding: Tensor::zeros(&[vocab_size, d]),
            conv_w: config.filter_widths.iter().map(|&m| Tensor::zeros(&[nf, m, d])).collect(),
            conv_b: config.filter_widths.iter().map(|_| Tensor::zeros(&[nf])).collect(),
            fc_w: Tensor::zeros(&[config.total_filters(), config.num_classes]),
            fc_b: Tensor::zeros(&[config.num_classes]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |t: &Tensor<F>| Tensor::zeros(&t.shape);
        CnnParams {
            embedding: z(&self.embedding),
            conv_w: self.conv_w.iter().map(z).collect(),
            conv_b: self.conv_b.iter().map(z).collect(),
            fc_w: z(&self.fc_w),
            fc_b: z(&self.fc_b),
        }
    }

    /// Stable tensor names, in serialization order.
    pub fn names(config: &CnnConfig) -> Vec<String> {
        let mut names = vec!["embedding".to_string()];
        for m in &config.filter_widths {
            names.push(format!("conv{m}.weight"));
            names.push(format!("conv{m}.bias"));
        }
        names.push("fc.weight".into());
        names.push("fc.bias".into());
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor<F>> {
        let mut out = vec![&self.embedding];
        for (w, b) in self.conv_w.iter().zip(&self.conv_b) {
            out.push(w);
            out.push(b);
        }
        out.push(&self.fc_w);
        out.push(&self.fc_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = vec![&mut self.embedding];
        for (w, b) in self.conv_w.iter_mut().zip(self.conv_b.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out.push(&mut self.fc_w);
        out.push(&mut self.fc_b);
        out
    }

    /// Rebuilds from tensors in [`CnnParams::tensors`] order.
    pub fn from_tensors(config: &CnnConfig, vocab_size: usize, tensors: Vec<Tensor<F>>) -> Result<Self> {
        let expected = Self::zeros(config, vocab_size);
        let want: Vec<Vec<usize>> = expected.tensors().iter().map(|t| t.shape.clone()).collect();
        let got: Vec<Vec<usize>> = tensors.iter().map(|t| t.shape.clone()).collect();
        if want != got {
            return Err(Error::Shape(format!("expected tensor shapes {want:?}, got {got:?}")));
        }
        let mut it = tensors.into_iter();
        let embedding = it.next().unwrap();
        let mut conv_w = Vec::new();
        let mut conv_b = Vec::new();
        for _ in &config.filter_widths {
            conv_w.push(it.next().unwrap());
            conv_b.push(it.next().unwrap());
        }
        Ok(CnnParams {
            embedding,
            conv_w,
            conv_b,
            fc_w: it.next().unwrap(),
            fc_b: it.next().unwrap(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    pub fn cast<G: Real>(&self) -> CnnParams<G> {
        CnnParams {
            embedding: self.embedding.cast(),
            conv_w: self.conv_w.iter().map(Tensor::cast).collect(),
            conv_b: self.conv_b.iter().map(Tensor::cast).collect(),
            fc_w: self.fc_w.cast(),
            fc_b: self.fc_b.cast(),
        }
    }
}

/// Convolutional text classifier: parameters plus the configuration and label
/// set they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel<F> {
    pub config: CnnConfig,
    pub labels: LabelSet,
    pub params: CnnParams<F>,
}

impl<F: Real> CnnModel<F> {
    /// Seeded random initialization.
    ///
    /// Embedding rows (except PAD) ~ U(-0.25, 0.25), filters ~ U(-0.1, 0.1),
    /// filter biases 0.1, FC weights Glorot-uniform, FC bias 0.
    pub fn new(config: CnnConfig, labels: LabelSet, vocab_size: usize) -> Result<Self> {
        config.validate()?;
        if config.num_classes != labels.len() {
            return Err(Error::Config(format!(
                "num_classes {} does not match label set size {}",
                config.num_classes,
                labels.len()
            )));
        }
        if vocab_size < 2 {
            return Err(Error::Config("vocabulary must include PAD and UNK".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_c0de);
        let mut p = CnnParams::<F>::zeros(&config, vocab_size);
        let d = config.embed_dim;
        for x in &mut p.embedding.data[d..] {
            *x = F::of(rng.gen_range(-0.25..0.25));
        }
        for w in &mut p.conv_w {
            for x in &mut w.data {
                *x = F::of(rng.gen_range(-0.1..0.1));
            }
        }
        for b in &mut p.conv_b {
            b.data.fill(F::of(0.1));
        }
        let bound = (6.0 / (config.total_filters() + config.num_classes) as f64).sqrt();
        for x in &mut p.fc_w.data {
            *x = F::of(rng.gen_range(-bound..bound));
        }
        Ok(CnnModel {
            config,
            labels,
            params: p,
        })
    }

    /// Copies rows of `table` for tokens it contains; other rows keep their
    /// random initialization. Returns how many rows were copied.
    pub fn load_embeddings(&mut self, table: &EmbeddingTable, vocab: &Vocabulary) -> Result<usize> {
        let d = self.config.embed_dim;
        if table.dim() != d {
            return Err(Error::Config(format!(
                "embedding file has dimension {} but the model expects {d}",
                table.dim()
            )));
        }
        if vocab.len() != self.vocab_size() {
            return Err(Error::Shape("vocabulary size differs from embedding rows".into()));
        }
        let mut copied = 0;
        for (i, tok) in vocab.tokens().iter().enumerate().skip(PAD as usize + 1) {
            if let Some(row) = table.get(tok) {
                for (dst, &src) in self.params.embedding.data[i * d..(i + 1) * d].iter_mut().zip(row) {
                    *dst = F::of(src as f64);
                }
                copied += 1;
            }
        }
        Ok(copied)
    }

    pub fn vocab_size(&self) -> usize {
        self.params.embedding.shape[0]
    }

    pub fn embedding_row(&self, index: u32) -> &[F] {
        let d = self.config.embed_dim;
        &self.params.embedding.data[index as usize * d..(index as usize + 1) * d]
    }

    /// Stacks embedding rows for a sequence into an `l x d` matrix.
    pub fn embed_sequence(&self, indices: &[u32]) -> Result<Vec<F>> {
        let d = self.config.embed_dim;
        let v = self.vocab_size();
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i as usize >= v {
                return Err(Error::Shape(format!("token index {i} outside vocabulary of {v}")));
            }
            out.extend_from_slice(self.embedding_row(i));
        }
        Ok(out)
    }

    pub fn cast<G: Real>(&self) -> CnnModel<G> {
        CnnModel {
            config: self.config.clone(),
            labels: self.labels.clone(),
            params: self.params.cast(),
        }
    }
}
