use std::collections::BTreeMap;

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EmbeddingTable;
use crate::corpus::{Vocabulary, UNK};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgnsConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

impl SgnsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.negatives == 0 {
            return Err(Error::Config("sgns dim, window and negatives must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("sgns learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Center (input) and context (output) vectors, row-major `vocab x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SgnsParams {
    pub dim: usize,
    pub center: Vec<f64>,
    pub context: Vec<f64>,
}

impl SgnsParams {
    fn c(&self, i: u32) -> &[f64] {
        let d = self.dim;
        &self.center[i as usize * d..(i as usize + 1) * d]
    }

    fn u(&self, i: u32) -> &[f64] {
        let d = self.dim;
        &self.context[i as usize * d..(i as usize + 1) * d]
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `ln(1 + e^-x)` without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Negative log-likelihood of one (center, context, negatives) example.
pub fn sgns_step_loss(p: &SgnsParams, center: u32, context: u32, negatives: &[u32]) -> f64 {
    let v = p.c(center);
    let mut loss = neg_log_sigmoid(dot(p.u(context), v));
    for &n in negatives {
        loss += neg_log_sigmoid(-dot(p.u(n), v));
    }
    loss
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgnsGradient {
    pub center: Vec<f64>,
    /// Per output row; a row drawn more than once accumulates.
    pub context: BTreeMap<u32, Vec<f64>>,
}

pub fn sgns_step_gradient(p: &SgnsParams, center: u32, context: u32, negatives: &[u32]) -> SgnsGradient {
    let d = p.dim;
    let v = p.c(center);
    let mut g_center = vec![0.0; d];
    let mut g_ctx: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let targets = std::iter::once((context, 1.0)).chain(negatives.iter().map(|&n| (n, 0.0)));
    for (row, label) in targets {
        let u = p.u(row);
        let coeff = sigmoid(dot(u, v)) - label;
        for k in 0..d {
            g_center[k] += coeff * u[k];
        }
        let acc = g_ctx.entry(row).or_insert_with(|| vec![0.0; d]);
        for k in 0..d {
            acc[k] += coeff * v[k];
        }
    }
    SgnsGradient {
        center: g_center,
        context: g_ctx,
    }
}

/// Skip-gram training with negatives drawn from the unigram distribution
/// raised to 3/4. Returns the center-vector table (PAD/UNK excluded) and the
/// mean per-example loss of each epoch.
pub fn sgns_train(
    docs: &[Vec<u32>],
    vocab: &Vocabulary,
    cfg: &SgnsConfig,
) -> Result<(EmbeddingTable, Vec<f64>)> {
    cfg.validate()?;
    let v = vocab.len();
    let d = cfg.dim;
    let weights: Vec<f64> = (0..v as u32).map(|i| (vocab.count(i) as f64).powf(0.75)).collect();
    let noise = WeightedIndex::new(&weights)
        .map_err(|e| Error::Data(format!("no token frequencies for negative sampling: {e}")))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bound = 0.5 / d as f64;
    let mut params = SgnsParams {
        dim: d,
        center: (0..v * d).map(|_| rng.gen_range(-bound..bound)).collect(),
        context: vec![0.0; v * d],
    };

    let mut pairs: Vec<(u32, u32)> = Vec::new();
    for doc in docs {
        let kept: Vec<u32> = doc.iter().copied().filter(|&t| t > UNK).collect();
        for (p, &c) in kept.iter().enumerate() {
            let lo = p.saturating_sub(cfg.window);
            let hi = (p + cfg.window).min(kept.len() - 1);
            for (q, &o) in kept.iter().enumerate().take(hi + 1).skip(lo) {
                if q != p {
                    pairs.push((c, o));
                }
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::Data("no skip-gram pairs in corpus".into()));
    }

    let total_steps = (pairs.len() * cfg.epochs).max(1) as f64;
    let mut step = 0usize;
    let mut negs = vec![0u32; cfg.negatives];
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        pairs.shuffle(&mut rng);
        let mut total = 0.0;
        for &(c, o) in &pairs {
            for n in negs.iter_mut() {
                *n = noise.sample(&mut rng) as u32;
            }
            let lr = cfg.learning_rate * (1.0 - step as f64 / total_steps).max(1e-4);
            step += 1;
            total += sgns_step_loss(&params, c, o, &negs);
            let g = sgns_step_gradient(&params, c, o, &negs);
            let ci = c as usize * d;
            for k in 0..d {
                params.center[ci + k] -= lr * g.center[k];
            }
            for (row, grad) in &g.context {
                let ri = *row as usize * d;
                for k in 0..d {
                    params.context[ri + k] -= lr * grad[k];
                }
            }
        }
        let mean = total / pairs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged {
                epoch,
                message: format!("skip-gram loss became {mean}"),
            });
        }
        history.push(mean);
    }

    let mut tokens = Vec::new();
    let mut data = Vec::new();
    for idx in (UNK + 1)..v as u32 {
        tokens.push(vocab.token(idx).expect("in range").to_string());
        data.extend(params.c(idx).iter().map(|&x| x as f32));
    }
    Ok((EmbeddingTable::new(tokens, d, data)?, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_params(v: usize, d: usize, seed: u64) -> SgnsParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SgnsParams {
            dim: d,
            center: (0..v * d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            context: (0..v * d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn step_gradient_matches_finite_differences() {
        let h = 1e-5;
        for seed in 0..5 {
            let p = random_params(6, 4, seed);
            let (c, o, negs) = (1u32, 2u32, [3u32, 4, 3, 5]);
            let g = sgns_step_gradient(&p, c, o, &negs);
            let mut worst: f64 = 0.0;
            let mut check = |analytic: f64, perturb: &dyn Fn(&mut SgnsParams, f64)| {
                let mut a = p.clone();
                perturb(&mut a, h);
                let mut b = p.clone();
                perturb(&mut b, -h);
                let num = (sgns_step_loss(&a, c, o, &negs) - sgns_step_loss(&b, c, o, &negs)) / (2.0 * h);
                worst = worst.max((analytic - num).abs() / analytic.abs().max(num.abs()).max(1e-8));
            };
            for k in 0..4 {
                check(g.center[k], &|q, e| q.center[c as usize * 4 + k] += e);
                for row in 0..6u32 {
                    let analytic = g.context.get(&row).map_or(0.0, |r| r[k]);
                    check(analytic, &|q, e| q.context[row as usize * 4 + k] += e);
                }
            }
            assert!(worst < 1e-6, "seed {seed}: {worst:e}");
        }
    }

    #[test]
    fn stable_log_sigmoid() {
        assert!((neg_log_sigmoid(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!(neg_log_sigmoid(800.0).is_finite());
        assert!((neg_log_sigmoid(-800.0) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_zero_negatives() {
        let cfg = SgnsConfig {
            negatives: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
