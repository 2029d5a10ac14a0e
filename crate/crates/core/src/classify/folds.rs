//! Stratified fold assignment and train/test splitting.

use rand::seq::SliceRandom;

use crate::dataio::LabelVector;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

fn shuffled_classes(labels: &LabelVector, seed: u64) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); labels.n_classes];
    for (i, &l) in labels.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for (c, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut stream_rng(seed, c as u64));
    }
    by_class
}

/// Fold index of every sample. Each class is shuffled with its own stream
/// and dealt round-robin; the deal continues where the previous class
/// stopped, so overall fold sizes differ by at most one.
pub fn stratified_kfold(labels: &LabelVector, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {folds}")));
    }
    for (class, &size) in labels.class_counts().iter().enumerate() {
        if size > 0 && size < folds {
            return Err(Error::ClassTooSmall { class, size, folds });
        }
    }
    let mut out = vec![0; labels.len()];
    let mut next = 0;
    for members in shuffled_classes(labels, seed) {
        for i in members {
            out[i] = next;
            next = (next + 1) % folds;
        }
    }
    Ok(out)
}

/// Per-class split that puts `round(test_fraction * size)` members of each
/// class into the test set. Returns sorted `(train, test)` indices.
pub fn stratified_split(labels: &LabelVector, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "test_fraction {test_fraction} outside (0,1)"
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for members in shuffled_classes(labels, seed) {
        let n_test = (test_fraction * members.len() as f64).round() as usize;
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(labels: &LabelVector, folds: &[usize], k: usize) -> Vec<Vec<usize>> {
        let mut c = vec![vec![0; k]; labels.n_classes];
        for (i, &f) in folds.iter().enumerate() {
            c[labels.labels[i]][f] += 1;
        }
        c
    }

    #[test]
    fn balanced_classes_fill_folds_exactly() {
        let labels = LabelVector::new((0..100).map(|i| i % 2).collect(), 2).unwrap();
        let f = stratified_kfold(&labels, 5, 1).unwrap();
        assert!(counts(&labels, &f, 5).iter().flatten().all(|&c| c == 10));
    }

    #[test]
    fn uneven_classes_differ_by_at_most_one() {
        let labels = LabelVector::new([vec![0; 7], vec![1; 13]].concat(), 2).unwrap();
        let f = stratified_kfold(&labels, 5, 2).unwrap();
        let c = counts(&labels, &f, 5);
        for row in &c {
            assert!(row.iter().max().unwrap() - row.iter().min().unwrap() <= 1);
        }
        let totals: Vec<usize> = (0..5).map(|k| c.iter().map(|r| r[k]).sum()).collect();
        assert!(totals.iter().max().unwrap() - totals.iter().min().unwrap() <= 1);
        assert_eq!(f, stratified_kfold(&labels, 5, 2).unwrap());
    }

    #[test]
    fn small_class_rejected() {
        let labels = LabelVector::new(vec![0, 0, 0, 0, 0, 1, 1], 2).unwrap();
        assert!(matches!(
            stratified_kfold(&labels, 5, 0),
            Err(Error::ClassTooSmall {
                class: 1,
                size: 2,
                folds: 5
            })
        ));
    }

    #[test]
    fn split_keeps_proportions() {
        let labels = LabelVector::new([vec![0; 50], vec![1; 30]].concat(), 2).unwrap();
        let (train, test) = stratified_split(&labels, 0.2, 3).unwrap();
        assert_eq!((train.len(), test.len()), (64, 16));
        assert_eq!(test.iter().filter(|&&i| labels.labels[i] == 1).count(), 6);
    }
}
