use serde::{Deserialize, Serialize};

use crate::corpus::DEFAULT_MAX_LEN;
use crate::{Error, Result};

/// Hyperparameters of the convolutional classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub filter_widths: Vec<usize>,
    pub filters_per_width: usize,
    pub embed_dim: usize,
    pub max_len: usize,
    pub num_classes: usize,
    /// Probability of zeroing a pooled unit during training.
    pub dropout: f64,
    pub l2_lambda: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// `lr_e = lr * decay / (decay + e)` for zero-based epoch `e`.
    pub decay: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub trainable_embeddings: bool,
    pub seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            filter_widths: vec![3, 4, 5],
            filters_per_width: 128,
            embed_dim: 100,
            max_len: DEFAULT_MAX_LEN,
            num_classes: 4,
            dropout: 0.5,
            l2_lambda: 0.05,
            batch_size: 32,
            epochs: 50,
            learning_rate: 1e-3,
            decay: 2.5,
            rho: 0.9,
            epsilon: 1e-6,
            trainable_embeddings: true,
            seed: 0,
        }
    }
}

impl CnnConfig {
    pub fn total_filters(&self) -> usize {
        self.filter_widths.len() * self.filters_per_width
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.decay / (self.decay + epoch as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.filter_widths.is_empty() || self.filter_widths.contains(&0) {
            return bad("filter widths must be a non-empty list of positive integers".into());
        }
        if let Some(&w) = self.filter_widths.iter().find(|&&w| w > self.max_len) {
            return bad(format!("filter width {w} exceeds max_len {}", self.max_len));
        }
        if self.filters_per_width == 0 || self.embed_dim == 0 || self.batch_size == 0 {
            return bad("filters_per_width, embed_dim and batch_size must be >= 1".into());
        }
        if self.num_classes < 2 {
            return bad(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad(format!("l2_lambda must be >= 0, got {}", self.l2_lambda));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.decay > 0.0 && self.decay.is_finite()) {
            return bad(format!("decay must be > 0, got {}", self.decay));
        }
        if !(0.0..1.0).contains(&self.rho) || !(self.epsilon > 0.0) {
            return bad("rho must be in [0, 1) and epsilon > 0".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = CnnConfig::default();
        c.validate().unwrap();
        assert_eq!(c.total_filters(), 384);
        assert_eq!(c.learning_rate_at(0), 1e-3);
        assert!((c.learning_rate_at(5) - 1e-3 * 2.5 / 7.5).abs() < 1e-18);
    }

    #[test]
    fn invalid_configs() {
        let base = CnnConfig::default();
        for c in [
            CnnConfig { filter_widths: vec![3, 500], ..base.clone() },
            CnnConfig { dropout: 1.0, ..base.clone() },
            CnnConfig { l2_lambda: -0.1, ..base.clone() },
            CnnConfig { num_classes: 1, ..base.clone() },
            CnnConfig { filter_widths: vec![], ..base.clone() },
        ] {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
