//! Accuracy, one-vs-rest ROC AUC and micro/macro F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub auc: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
}

impl Metrics {
    pub const NAMES: [&'static str; 4] = ["ACC", "AUC", "mF1", "MF1"];

    pub fn values(&self) -> [f64; 4] {
        [self.acc, self.auc, self.micro_f1, self.macro_f1]
    }
}

/// Area under the ROC curve of `scores` for the positive class, with tied
/// scores sharing their average rank. `None` without both classes.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&t| positive[t]).count() as f64;
        i = j + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// `scores[i][c]` is the score of sample `i` for class `c`.
pub fn evaluate(predictions: &[usize], scores: &[Vec<f64>], truth: &[usize], n_classes: usize) -> Result<Metrics> {
    let n = truth.len();
    if predictions.len() != n || scores.len() != n {
        return Err(Error::Shape("predictions, scores and truth differ in length".into()));
    }
    if n == 0 {
        return Err(Error::Shape("nothing to evaluate".into()));
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    for (&p, &t) in predictions.iter().zip(truth) {
        if p == t {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let correct: usize = tp.iter().sum();
    let acc = correct as f64 / n as f64;
    let f1 = |tp: usize, fp: usize, fn_: usize| {
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    let micro_f1 = f1(correct, fp.iter().sum(), fn_.iter().sum());
    let macro_f1 = (0..n_classes).map(|c| f1(tp[c], fp[c], fn_[c])).sum::<f64>() / n_classes as f64;
    let mut aucs = Vec::new();
    for c in 0..n_classes {
        let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        let pos: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        match roc_auc(&s, &pos) {
            Some(a) => aucs.push(a),
            None => log::warn!("class {c} has no positive or no negative test sample; AUC excluded"),
        }
    }
    let auc = if aucs.is_empty() {
        f64::NAN
    } else {
        aucs.iter().sum::<f64>() / aucs.len() as f64
    };
    Ok(Metrics {
        acc,
        auc,
        micro_f1,
        macro_f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn one_hot(p: &[usize], k: usize) -> Vec<Vec<f64>> {
        p.iter()
            .map(|&c| (0..k).map(|j| f64::from(u8::from(j == c))).collect())
            .collect()
    }

    #[test]
    fn perfect_predictions() {
        let t = [0, 1, 2, 1, 0];
        let m = evaluate(&t, &one_hot(&t, 3), &t, 3).unwrap();
        assert_eq!(m.values(), [1.0; 4]);
    }

    #[test]
    fn constant_prediction_on_balanced_binary() {
        let t = [0, 0, 1, 1];
        let p = [1, 1, 1, 1];
        let m = evaluate(&p, &one_hot(&p, 2), &t, 2).unwrap();
        assert_eq!(m.acc, 0.5);
        assert!((m.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.auc, 0.5);
    }

    #[test]
    fn micro_f1_equals_accuracy() {
        let mut rng = seeded(4);
        for _ in 0..1000 {
            let k = rng.random_range(2..7);
            let n = rng.random_range(1..60);
            let t: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let m = evaluate(&p, &one_hot(&p, k), &t, k).unwrap();
            assert_eq!(m.micro_f1, m.acc);
        }
    }

    #[test]
    fn auc_ties_and_monotone_invariance() {
        assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]), Some(0.75));
        assert_eq!(roc_auc(&[0.5, 0.5], &[false, true]), Some(0.5));
        assert_eq!(roc_auc(&[0.5, 0.5], &[true, true]), None);
        let s = [0.3, -1.0, 2.0, 0.3, 0.7];
        let pos = [true, false, true, false, false];
        let squashed: Vec<f64> = s.iter().map(|v: &f64| v.powi(3) + 5.0).collect();
        assert_eq!(roc_auc(&s, &pos), roc_auc(&squashed, &pos));
    }
}
