use std::collections::BTreeMap;

use crate::corpus::UNK;
use crate::{Error, Result};

/// Sparse word-word context counts. Only positive cells are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix {
    pub vocab_size: usize,
    pub window: usize,
    pub distance_weighting: bool,
    pub symmetric: bool,
    cells: BTreeMap<(u32, u32), f64>,
}

impl CooccurrenceMatrix {
    pub fn new(vocab_size: usize, window: usize, distance_weighting: bool) -> Self {
        CooccurrenceMatrix {
            vocab_size,
            window,
            distance_weighting,
            symmetric: true,
            cells: BTreeMap::new(),
        }
    }

    /// Builds a matrix from explicit cells. Non-positive values are dropped.
    pub fn from_cells(vocab_size: usize, cells: impl IntoIterator<Item = ((u32, u32), f64)>) -> Self {
        let mut m = CooccurrenceMatrix::new(vocab_size, 1, false);
        m.symmetric = false;
        for (k, v) in cells {
            if v > 0.0 {
                *m.cells.entry(k).or_insert(0.0) += v;
            }
        }
        m.symmetric = m.cells.iter().all(|(&(i, j), v)| m.cells.get(&(j, i)) == Some(v));
        m
    }

    pub fn get(&self, i: u32, j: u32) -> f64 {
        self.cells.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Stored cells in (row, column) order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.cells.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    /// Cell-wise sum, for combining matrices built on document shards.
    pub fn merge(&mut self, other: &CooccurrenceMatrix) {
        for (&k, &v) in &other.cells {
            *self.cells.entry(k).or_insert(0.0) += v;
        }
        self.symmetric &= other.symmetric;
    }
}

/// Counts co-occurrences within `window` positions of each other.
///
/// Each ordered pair of positions at distance `k` adds `1/k` (weighted) or `1`.
/// UNK positions are skipped but still occupy their slot in the window.
pub fn build_cooccurrence(
    docs: &[Vec<u32>],
    vocab_size: usize,
    window: usize,
    distance_weighting: bool,
) -> Result<CooccurrenceMatrix> {
    if window < 1 {
        return Err(Error::Config("co-occurrence window must be >= 1".into()));
    }
    let mut m = CooccurrenceMatrix::new(vocab_size, window, distance_weighting);
    for doc in docs {
        for (p, &wp) in doc.iter().enumerate() {
            if wp <= UNK {
                continue;
            }
            for k in 1..=window {
                let Some(&wq) = doc.get(p + k) else { break };
                if wq <= UNK {
                    continue;
                }
                let inc = if distance_weighting { 1.0 / k as f64 } else { 1.0 };
                *m.cells.entry((wp, wq)).or_insert(0.0) += inc;
                *m.cells.entry((wq, wp)).or_insert(0.0) += inc;
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // a = 2, b = 3
    #[test]
    fn window_one_unweighted() {
        let m = build_cooccurrence(&[vec![2, 3, 2]], 4, 1, false).unwrap();
        assert_eq!(m.get(2, 3), 2.0);
        assert_eq!(m.get(3, 2), 2.0);
        assert_eq!(m.get(2, 2), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn window_two_weighted() {
        let m = build_cooccurrence(&[vec![2, 3, 2]], 4, 2, true).unwrap();
        assert_eq!(m.get(2, 2), 1.0);
        assert_eq!(m.get(2, 3), 2.0);
    }

    #[test]
    fn empty_and_invalid() {
        assert!(build_cooccurrence(&[], 4, 2, true).unwrap().is_empty());
        assert!(build_cooccurrence(&[vec![2]], 4, 0, true).is_err());
    }

    #[test]
    fn pad_and_unk_skipped() {
        let m = build_cooccurrence(&[vec![2, 1, 3, 0]], 4, 1, false).unwrap();
        assert!(m.is_empty());
    }

    proptest! {
        #[test]
        fn symmetric_and_shard_merge(docs in proptest::collection::vec(proptest::collection::vec(0u32..8, 0..15), 0..6), window in 1usize..4, weighted: bool) {
            let m = build_cooccurrence(&docs, 8, window, weighted).unwrap();
            for (i, j, v) in m.iter() {
                prop_assert!(v > 0.0);
                prop_assert_eq!(m.get(j, i), v);
            }
            let mid = docs.len() / 2;
            let mut a = build_cooccurrence(&docs[..mid], 8, window, weighted).unwrap();
            let b = build_cooccurrence(&docs[mid..], 8, window, weighted).unwrap();
            a.merge(&b);
            for (i, j, v) in m.iter() {
                prop_assert!((a.get(i, j) - v).abs() < 1e-12);
            }
            prop_assert_eq!(a.nnz(), m.nnz());
        }
    }
}
