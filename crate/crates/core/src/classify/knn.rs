//! k-nearest-neighbour voting over precomputed squared distances.

use crate::classify::svm::KernelSource;
use crate::scalar::Scalar;

/// Predicted label and per-class vote fractions for `query` given the
/// training samples `train` (global indices) and their labels.
///
/// Neighbours are ordered by distance and then by position in `train`, and
/// the first `k` are kept; vote ties go to the smallest class id.
pub fn knn_vote<F: Scalar>(
    dist: impl Fn(usize) -> F,
    train_labels: &[usize],
    k: usize,
    n_classes: usize,
) -> (usize, Vec<f64>) {
    let mut order: Vec<(F, usize)> = (0..train_labels.len()).map(|i| (dist(i), i)).collect();
    let k = k.min(order.len()).max(1);
    order.select_nth_unstable_by(k - 1, |a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut votes = vec![0usize; n_classes];
    for &(_, i) in &order[..k] {
        votes[train_labels[i]] += 1;
    }
    let mut best = 0;
    for c in 1..n_classes {
        if votes[c] > votes[best] {
            best = c;
        }
    }
    (best, votes.iter().map(|&v| v as f64 / k as f64).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub train: Vec<usize>,
    pub labels: Vec<usize>,
    pub k: usize,
    pub n_classes: usize,
}

impl KnnModel {
    pub fn predict<F: Scalar>(&self, src: &KernelSource<F>, query: usize) -> (usize, Vec<f64>) {
        knn_vote(
            |i| src.sqdist(self.train[i], query),
            &self.labels,
            self.k,
            self.n_classes,
        )
    }
}
