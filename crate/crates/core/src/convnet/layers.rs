use super::Real;
use crate::{Error, Result};

/// One filter slid over an embedded sequence, with ReLU.
///
/// `x` is `l x d` row-major, `w` is `m x d`; the result has `l - m + 1` entries.
pub fn conv_feature_map<F: Real>(x: &[F], w: &[F], b: F, d: usize) -> Result<Vec<F>> {
    if d == 0 || x.len() % d != 0 || w.len() % d != 0 || w.is_empty() {
        return Err(Error::Shape("conv operands must be non-empty multiples of the embedding dim".into()));
    }
    let (l, m) = (x.len() / d, w.len() / d);
    if m > l {
        return Err(Error::Shape(format!("filter width {m} exceeds sequence length {l}")));
    }
    Ok((0..=l - m)
        .map(|i| {
            let window = &x[i * d..(i + m) * d];
            let s: F = window.iter().zip(w).map(|(&a, &b)| a * b).sum();
            relu(s + b)
        })
        .collect())
}

pub fn relu<F: Real>(x: F) -> F {
    if x > F::zero() {
        x
    } else {
        F::zero()
    }
}

/// Maximum of a feature map and the first index attaining it.
pub fn max_pool<F: Real>(c: &[F]) -> Result<(F, usize)> {
    let (&first, rest) = c
        .split_first()
        .ok_or_else(|| Error::Shape("max-pool over an empty feature map".into()))?;
    let mut best = (first, 0);
    for (i, &v) in rest.iter().enumerate() {
        if v > best.0 {
            best = (v, i + 1);
        }
    }
    Ok(best)
}

pub fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<F: PartialOrd + Copy>(v: &[F]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_hand_example() {
        let x = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        let w = [1.0, 1.0, 1.0, 1.0];
        assert_eq!(conv_feature_map(&x, &w, -1.0, 2).unwrap(), vec![1.0, 2.0, 1.0]);
        assert_eq!(max_pool(&[1.0, 2.0, 1.0]).unwrap(), (2.0, 1));
    }

    #[test]
    fn conv_edge_cases() {
        let x = [0.3f64, -0.2, 0.5, 0.9];
        assert_eq!(conv_feature_map(&x, &[0.0; 2], 0.0, 2).unwrap(), vec![0.0, 0.0]);
        assert_eq!(conv_feature_map(&x, &[1.0; 4], 0.0, 2).unwrap().len(), 1);
        assert!(conv_feature_map(&x, &[1.0; 6], 0.0, 2).is_err());
    }

    #[test]
    fn pool_edge_cases() {
        assert_eq!(max_pool(&[4.5]).unwrap(), (4.5, 0));
        assert_eq!(max_pool(&[7.0, 7.0, 7.0]).unwrap(), (7.0, 0));
        assert!(max_pool::<f64>(&[]).is_err());
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[0.1, 0.6, 0.2, 0.1]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn softmax_is_stable() {
        let p = softmax(&[1000.0f64, 1000.0, -1000.0]);
        assert!((p[0] - 0.5).abs() < 1e-12 && p[2] == 0.0);
    }
}
