use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CooccurrenceMatrix, EmbeddingTable};
use crate::corpus::{Vocabulary, UNK};
use crate::{Error, Result};

/// GloVe weighting: `(x / x_max)^alpha` below the cap, 1 above it.
pub fn weight_f(x: f64, x_max: f64, alpha: f64) -> Result<f64> {
    if x_max <= 0.0 {
        return Err(Error::Config(format!("x_max must be positive, got {x_max}")));
    }
    Ok(if x < x_max { (x / x_max).powf(alpha) } else { 1.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GloveConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub x_max: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for GloveConfig {
    fn default() -> Self {
        GloveConfig {
            dim: 100,
            epochs: 25,
            learning_rate: 0.05,
            x_max: 100.0,
            alpha: 0.75,
            seed: 0,
        }
    }
}

impl GloveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("glove dim must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("glove learning rate must be positive".into()));
        }
        if self.x_max <= 0.0 || self.alpha <= 0.0 {
            return Err(Error::Config("x_max and alpha must be positive".into()));
        }
        Ok(())
    }
}

/// Main/context vectors and biases, plus AdaGrad accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct GloveParams {
    pub vocab_size: usize,
    pub dim: usize,
    pub w: Vec<f64>,
    pub w_ctx: Vec<f64>,
    pub b: Vec<f64>,
    pub b_ctx: Vec<f64>,
    pub grad_sq_w: Vec<f64>,
    pub grad_sq_w_ctx: Vec<f64>,
    pub grad_sq_b: Vec<f64>,
    pub grad_sq_b_ctx: Vec<f64>,
}

impl GloveParams {
    /// Uniform init in `(-0.5/dim, 0.5/dim)`; accumulators start at 1.
    pub fn init(vocab_size: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 0.5 / dim as f64;
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        let w = draw(vocab_size * dim);
        let w_ctx = draw(vocab_size * dim);
        let b = draw(vocab_size);
        let b_ctx = draw(vocab_size);
        GloveParams {
            vocab_size,
            dim,
            w,
            w_ctx,
            b,
            b_ctx,
            grad_sq_w: vec![1.0; vocab_size * dim],
            grad_sq_w_ctx: vec![1.0; vocab_size * dim],
            grad_sq_b: vec![1.0; vocab_size],
            grad_sq_b_ctx: vec![1.0; vocab_size],
        }
    }

    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        GloveParams {
            vocab_size,
            dim,
            w: vec![0.0; vocab_size * dim],
            w_ctx: vec![0.0; vocab_size * dim],
            b: vec![0.0; vocab_size],
            b_ctx: vec![0.0; vocab_size],
            grad_sq_w: vec![1.0; vocab_size * dim],
            grad_sq_w_ctx: vec![1.0; vocab_size * dim],
            grad_sq_b: vec![1.0; vocab_size],
            grad_sq_b_ctx: vec![1.0; vocab_size],
        }
    }

    fn row(v: &[f64], i: usize, d: usize) -> &[f64] {
        &v[i * d..(i + 1) * d]
    }

    /// `w_i . w~_j + b_i + b~_j - ln x`
    pub fn residual(&self, i: usize, j: usize, x: f64) -> f64 {
        let d = self.dim;
        let dot: f64 = Self::row(&self.w, i, d)
            .iter()
            .zip(Self::row(&self.w_ctx, j, d))
            .map(|(a, b)| a * b)
            .sum();
        dot + self.b[i] + self.b_ctx[j] - x.ln()
    }

    /// Swaps the roles of main and context parameters.
    pub fn transposed(&self) -> Self {
        GloveParams {
            w: self.w_ctx.clone(),
            w_ctx: self.w.clone(),
            b: self.b_ctx.clone(),
            b_ctx: self.b.clone(),
            grad_sq_w: self.grad_sq_w_ctx.clone(),
            grad_sq_w_ctx: self.grad_sq_w.clone(),
            grad_sq_b: self.grad_sq_b_ctx.clone(),
            grad_sq_b_ctx: self.grad_sq_b.clone(),
            ..*self
        }
    }

    fn check(&self, x: &CooccurrenceMatrix) -> Result<()> {
        let (v, d) = (self.vocab_size, self.dim);
        if self.w.len() != v * d || self.w_ctx.len() != v * d || self.b.len() != v || self.b_ctx.len() != v {
            return Err(Error::Shape("glove parameter sizes disagree with vocab x dim".into()));
        }
        if x.vocab_size > v {
            return Err(Error::Shape(format!(
                "co-occurrence vocabulary {} exceeds parameter vocabulary {v}",
                x.vocab_size
            )));
        }
        let finite = self
            .w
            .iter()
            .chain(&self.w_ctx)
            .chain(&self.b)
            .chain(&self.b_ctx)
            .all(|p| p.is_finite());
        if !finite {
            return Err(Error::Numeric("non-finite glove parameter".into()));
        }
        Ok(())
    }
}

/// Weighted least-squares cost summed over the stored cells of `x`.
pub fn glove_loss(params: &GloveParams, x: &CooccurrenceMatrix, x_max: f64, alpha: f64) -> Result<f64> {
    params.check(x)?;
    let mut j = 0.0;
    for (i, k, v) in x.iter() {
        let r = params.residual(i as usize, k as usize, v);
        j += weight_f(v, x_max, alpha)? * r * r;
    }
    Ok(j)
}

/// Gradient of one cell's cost `f(x) r^2` with respect to its four parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct GloveCellGradient {
    pub w_i: Vec<f64>,
    pub w_ctx_j: Vec<f64>,
    pub b_i: f64,
    pub b_ctx_j: f64,
    pub loss: f64,
}

pub fn glove_cell_gradient(
    params: &GloveParams,
    i: usize,
    j: usize,
    x: f64,
    x_max: f64,
    alpha: f64,
) -> Result<GloveCellGradient> {
    let d = params.dim;
    let fx = weight_f(x, x_max, alpha)?;
    let r = params.residual(i, j, x);
    let g = 2.0 * fx * r;
    Ok(GloveCellGradient {
        w_i: GloveParams::row(&params.w_ctx, j, d).iter().map(|c| g * c).collect(),
        w_ctx_j: GloveParams::row(&params.w, i, d).iter().map(|c| g * c).collect(),
        b_i: g,
        b_ctx_j: g,
        loss: fx * r * r,
    })
}

/// Full-batch gradient of [`glove_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct GloveGradient {
    pub w: Vec<f64>,
    pub w_ctx: Vec<f64>,
    pub b: Vec<f64>,
    pub b_ctx: Vec<f64>,
}

pub fn glove_gradient(params: &GloveParams, x: &CooccurrenceMatrix, x_max: f64, alpha: f64) -> Result<GloveGradient> {
    params.check(x)?;
    let (v, d) = (params.vocab_size, params.dim);
    let mut g = GloveGradient {
        w: vec![0.0; v * d],
        w_ctx: vec![0.0; v * d],
        b: vec![0.0; v],
        b_ctx: vec![0.0; v],
    };
    for (i, j, val) in x.iter() {
        let (i, j) = (i as usize, j as usize);
        let cell = glove_cell_gradient(params, i, j, val, x_max, alpha)?;
        for k in 0..d {
            g.w[i * d + k] += cell.w_i[k];
            g.w_ctx[j * d + k] += cell.w_ctx_j[k];
        }
        g.b[i] += cell.b_i;
        g.b_ctx[j] += cell.b_ctx_j;
    }
    Ok(g)
}

fn adagrad(param: &mut f64, acc: &mut f64, g: f64, lr: f64) {
    *acc += g * g;
    *param -= lr * g / acc.sqrt();
}

pub struct GloveTrained {
    pub table: EmbeddingTable,
    pub params: GloveParams,
    /// Mean per-cell cost of each epoch, measured before each cell's update.
    pub history: Vec<f64>,
}

/// Stochastic AdaGrad over shuffled stored cells. The exported vector of each
/// word is the sum of its main and context vectors; PAD and UNK are not exported.
pub fn glove_train(x: &CooccurrenceMatrix, vocab: &Vocabulary, cfg: &GloveConfig) -> Result<GloveTrained> {
    cfg.validate()?;
    if x.is_empty() {
        return Err(Error::Data("co-occurrence matrix is empty".into()));
    }
    let v = vocab.len();
    let d = cfg.dim;
    let mut params = GloveParams::init(v, d, cfg.seed);
    params.check(x)?;

    let mut cells: Vec<(usize, usize, f64, f64)> = x
        .iter()
        .map(|(i, j, val)| Ok((i as usize, j as usize, val, weight_f(val, cfg.x_max, cfg.alpha)?)))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut grad_w = vec![0.0; d];
    let mut grad_ctx = vec![0.0; d];

    for epoch in 0..cfg.epochs {
        cells.shuffle(&mut rng);
        let mut total = 0.0;
        for &(i, j, val, fx) in &cells {
            let r = params.residual(i, j, val);
            total += fx * r * r;
            let g = 2.0 * fx * r;
            for k in 0..d {
                grad_w[k] = g * params.w_ctx[j * d + k];
                grad_ctx[k] = g * params.w[i * d + k];
            }
            for k in 0..d {
                adagrad(&mut params.w[i * d + k], &mut params.grad_sq_w[i * d + k], grad_w[k], cfg.learning_rate);
                adagrad(
                    &mut params.w_ctx[j * d + k],
                    &mut params.grad_sq_w_ctx[j * d + k],
                    grad_ctx[k],
                    cfg.learning_rate,
                );
            }
            adagrad(&mut params.b[i], &mut params.grad_sq_b[i], g, cfg.learning_rate);
            adagrad(&mut params.b_ctx[j], &mut params.grad_sq_b_ctx[j], g, cfg.learning_rate);
        }
        let mean = total / cells.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged {
                epoch,
                message: format!("glove loss became {mean}"),
            });
        }
        history.push(mean);
    }

    let mut tokens = Vec::with_capacity(v.saturating_sub(2));
    let mut data = Vec::with_capacity(v.saturating_sub(2) * d);
    for idx in (UNK as usize + 1)..v {
        tokens.push(vocab.token(idx as u32).expect("in range").to_string());
        for k in 0..d {
            data.push((params.w[idx * d + k] + params.w_ctx[idx * d + k]) as f32);
        }
    }
    let table = EmbeddingTable::new(tokens, d, data)?;
    Ok(GloveTrained { table, params, history })
}
