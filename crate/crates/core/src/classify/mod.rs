//! Supervised decoding: k-NN, linear and RBF SVMs, and one-vs-one ECOC,
//! with stratified cross-validated model selection over repeated splits.

pub mod folds;
pub mod knn;
pub mod metrics;
pub mod multiclass;
pub mod svm;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use folds::{stratified_kfold, stratified_split};
pub use knn::{knn_vote, KnnModel};
pub use metrics::{evaluate, roc_auc, Metrics};
pub use multiclass::{fit, ClassifierKind, Dataset, Hyper, Model};
pub use svm::{train_svm, BinarySvm, Kernel, KernelSource};

use crate::dataio::csv::{fmt_float, CsvBuf};
use crate::dataio::LabelVector;
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub k_values: Vec<usize>,
    pub c_values: Vec<f64>,
    /// Multiplied by `1 / n_features` to obtain the RBF width.
    pub gamma_scales: Vec<f64>,
}

impl ClassifierSpec {
    pub fn default_for(kind: ClassifierKind) -> Self {
        Self {
            kind,
            k_values: (1..=15).step_by(2).collect(),
            c_values: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            gamma_scales: vec![0.001, 0.01, 0.1, 1.0],
        }
    }

    pub fn defaults() -> Vec<Self> {
        ClassifierKind::ALL.into_iter().map(Self::default_for).collect()
    }

    /// Grid points in evaluation order.
    pub fn grid(&self, n_features: usize) -> Vec<Hyper> {
        let nf = n_features.max(1) as f64;
        match self.kind {
            ClassifierKind::Knn => self.k_values.iter().map(|&k| Hyper::Knn { k }).collect(),
            ClassifierKind::LinearSvm => self.c_values.iter().map(|&c| Hyper::Linear { c }).collect(),
            ClassifierKind::EcocLinearSvm => self.c_values.iter().map(|&c| Hyper::Ecoc { c }).collect(),
            ClassifierKind::RbfSvm => self
                .c_values
                .iter()
                .flat_map(|&c| self.gamma_scales.iter().map(move |&g| Hyper::Rbf { c, gamma: g / nf }))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = match self.kind {
            ClassifierKind::Knn => self.k_values.is_empty() || self.k_values.contains(&0),
            ClassifierKind::LinearSvm | ClassifierKind::EcocLinearSvm => {
                self.c_values.is_empty() || self.c_values.iter().any(|&c| !(c > 0.0))
            }
            ClassifierKind::RbfSvm => {
                self.c_values.is_empty()
                    || self.gamma_scales.is_empty()
                    || self.c_values.iter().chain(&self.gamma_scales).any(|&v| !(v > 0.0))
            }
        };
        if bad {
            return Err(Error::InvalidParameter(format!(
                "{} grid must be non-empty with positive values",
                self.kind.name()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub n_splits: usize,
    pub test_fraction: f64,
    pub cv_folds: usize,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self {
            n_splits: 10,
            test_fraction: 0.2,
            cv_folds: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub split: usize,
    /// Seed of the accepted train/test division.
    pub split_seed: u64,
    pub chosen: Hyper,
    pub cv_accuracy: f64,
    pub metrics: Metrics,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierResult {
    pub kind: ClassifierKind,
    pub splits: Vec<SplitOutcome>,
    pub mean: Metrics,
    /// Sample standard deviation over splits.
    pub std: Metrics,
}

impl ClassifierResult {
    /// Most frequently chosen setting (earliest split wins ties).
    pub fn chosen_mode(&self) -> Option<Hyper> {
        let mut best: Option<(Hyper, usize)> = None;
        for s in &self.splits {
            let count = self.splits.iter().filter(|o| o.chosen == s.chosen).count();
            if best.is_none_or(|(_, c)| count > c) {
                best = Some((s.chosen, count));
            }
        }
        best.map(|(h, _)| h)
    }

    pub fn all_converged(&self) -> bool {
        self.splits.iter().all(|s| s.converged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scheme: String,
    pub plan: SplitPlan,
    pub results: Vec<ClassifierResult>,
}

impl EvalReport {
    pub fn best_accuracy(&self) -> Option<&ClassifierResult> {
        self.results
            .iter()
            .fold(None, |best: Option<&ClassifierResult>, r| match best {
                Some(b) if b.mean.acc >= r.mean.acc => Some(b),
                _ => Some(r),
            })
    }

    pub fn all_converged(&self) -> bool {
        self.results.iter().all(ClassifierResult::all_converged)
    }

    /// Appends `scheme,classifier,metric,mean,std,chosen_params_mode` rows.
    pub fn append_csv(&self, out: &mut CsvBuf) {
        for r in &self.results {
            let mode = r.chosen_mode().map_or_else(String::new, |h| h.to_string());
            for (i, name) in Metrics::NAMES.iter().enumerate() {
                out.row([
                    self.scheme.clone(),
                    r.kind.name().to_string(),
                    name.to_string(),
                    fmt_float(r.mean.values()[i]),
                    fmt_float(r.std.values()[i]),
                    mode.clone(),
                ]);
            }
        }
    }
}

pub const EVAL_HEADER: [&str; 6] = ["scheme", "classifier", "metric", "mean", "std", "chosen_params_mode"];

fn mean_std(values: &[Metrics]) -> (Metrics, Metrics) {
    let n = values.len() as f64;
    let cols: Vec<[f64; 4]> = values.iter().map(Metrics::values).collect();
    let mut mean = [0.0; 4];
    let mut std = [0.0; 4];
    for m in 0..4 {
        mean[m] = cols.iter().map(|c| c[m]).sum::<f64>() / n;
        std[m] = if values.len() > 1 {
            (cols.iter().map(|c| (c[m] - mean[m]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
    }
    let pack = |a: [f64; 4]| Metrics {
        acc: a[0],
        auc: a[1],
        micro_f1: a[2],
        macro_f1: a[3],
    };
    (pack(mean), pack(std))
}

/// Pooled cross-validated accuracy of `hyper` on `train`.
pub fn cv_accuracy<F: Scalar>(
    data: Dataset<'_, F>,
    train: &[usize],
    folds: &[usize],
    n_folds: usize,
    hyper: Hyper,
) -> Result<f64> {
    let mut correct = 0usize;
    for f in 0..n_folds {
        let fit_idx: Vec<usize> = train
            .iter()
            .zip(folds)
            .filter(|(_, &g)| g != f)
            .map(|(&i, _)| i)
            .collect();
        let held: Vec<usize> = train
            .iter()
            .zip(folds)
            .filter(|(_, &g)| g == f)
            .map(|(&i, _)| i)
            .collect();
        let model = fit(data, &fit_idx, hyper)?;
        let (pred, _) = model.predict(data.source, &held);
        correct += pred.iter().zip(&held).filter(|(p, &i)| **p == data.labels[i]).count();
    }
    Ok(correct as f64 / train.len() as f64)
}

const MAX_SPLIT_ATTEMPTS: u64 = 100;

/// Train/test division for split `s`, redrawn while a class present in the
/// data is missing from the training part or too small for the CV folds.
pub fn split_for(labels: &LabelVector, plan: &SplitPlan, s: usize) -> Result<(u64, Vec<usize>, Vec<usize>)> {
    let present: Vec<usize> = labels
        .class_counts()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, _)| i)
        .collect();
    let base = derive_seed(plan.seed, s as u64);
    for attempt in 0..MAX_SPLIT_ATTEMPTS {
        let seed = derive_seed(base, attempt);
        let (train, test) = stratified_split(labels, plan.test_fraction, seed)?;
        let counts = labels.subset(&train).class_counts();
        if present.iter().all(|&c| counts[c] >= plan.cv_folds) {
            return Ok((seed, train, test));
        }
        log::info!("split {s} attempt {attempt}: a class is too small in the training part; redrawing");
    }
    Err(Error::InvalidParameter(format!(
        "could not draw a usable split {s} after {MAX_SPLIT_ATTEMPTS} attempts"
    )))
}

fn run_split<F: Scalar>(
    data: Dataset<'_, F>,
    labels: &LabelVector,
    specs: &[ClassifierSpec],
    plan: &SplitPlan,
    n_features: usize,
    s: usize,
) -> Result<Vec<SplitOutcome>> {
    let (split_seed, train, test) = split_for(labels, plan, s)?;
    let folds = stratified_kfold(&labels.subset(&train), plan.cv_folds, derive_seed(split_seed, 1))?;
    let truth: Vec<usize> = test.iter().map(|&i| labels.labels[i]).collect();
    let mut memo: Vec<(Hyper, f64)> = Vec::new();
    specs
        .iter()
        .map(|spec| {
            let grid = spec.grid(n_features);
            let mut best: Option<(Hyper, f64)> = None;
            for &h in &grid {
                let key = h.canonical(labels.n_classes);
                let acc = match memo.iter().find(|(m, _)| *m == key) {
                    Some(&(_, acc)) => acc,
                    None => {
                        let acc = cv_accuracy(data, &train, &folds, plan.cv_folds, key)?;
                        memo.push((key, acc));
                        acc
                    }
                };
                if best.is_none_or(|(_, b)| acc > b) {
                    best = Some((h, acc));
                }
            }
            let (chosen, cv_acc) = best.ok_or_else(|| Error::InvalidParameter("empty grid".into()))?;
            let model = fit(data, &train, chosen)?;
            let (pred, scores) = model.predict(data.source, &test);
            Ok(SplitOutcome {
                split: s,
                split_seed,
                chosen,
                cv_accuracy: cv_acc,
                metrics: evaluate(&pred, &scores, &truth, labels.n_classes)?,
                converged: model.converged(),
            })
        })
        .collect()
}

/// Runs every classifier over `plan.n_splits` stratified splits, choosing
/// hyperparameters by `plan.cv_folds`-fold CV accuracy (first grid point on
/// ties) and scoring the refit model on the held-out part.
pub fn run_experiment_with_source<F: Scalar>(
    source: &KernelSource<F>,
    n_features: usize,
    labels: &LabelVector,
    scheme: &str,
    specs: &[ClassifierSpec],
    plan: &SplitPlan,
) -> Result<EvalReport> {
    if source.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} samples but {} labels",
            source.len(),
            labels.len()
        )));
    }
    if plan.n_splits == 0 || plan.cv_folds < 2 {
        return Err(Error::InvalidParameter("need n_splits >= 1 and cv_folds >= 2".into()));
    }
    for s in specs {
        s.validate()?;
    }
    let data = Dataset {
        source,
        labels: &labels.labels,
        n_classes: labels.n_classes,
    };
    let per_split: Vec<Vec<SplitOutcome>> = (0..plan.n_splits)
        .into_par_iter()
        .map(|s| run_split(data, labels, specs, plan, n_features, s))
        .collect::<Result<_>>()?;
    let results = specs
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let splits: Vec<SplitOutcome> = per_split.iter().map(|o| o[j].clone()).collect();
            let (mean, std) = mean_std(&splits.iter().map(|o| o.metrics).collect::<Vec<_>>());
            ClassifierResult {
                kind: spec.kind,
                splits,
                mean,
                std,
            }
        })
        .collect();
    Ok(EvalReport {
        scheme: scheme.to_string(),
        plan: *plan,
        results,
    })
}

pub fn run_experiment<F: Scalar>(
    m: &crate::dataio::Matrix<F>,
    labels: &LabelVector,
    scheme: &str,
    specs: &[ClassifierSpec],
    plan: &SplitPlan,
) -> Result<EvalReport> {
    run_experiment_with_source(&KernelSource::new(m), m.cols(), labels, scheme, specs, plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Matrix;
    use crate::rng::seeded;
    use rand::seq::SliceRandom;
    use rand_distr::{Distribution, Normal};

    fn blobs(n: usize, sep: f64, seed: u64) -> (Matrix<f64>, LabelVector) {
        let mut rng = seeded(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let x = Matrix::from_fn(
            n,
            4,
            |i, c| if c == labels[i] { sep } else { 0.0 } + noise.sample(&mut rng),
        );
        (x, LabelVector::new(labels, 3).unwrap())
    }

    fn quick_specs() -> Vec<ClassifierSpec> {
        ClassifierKind::ALL
            .into_iter()
            .map(|kind| ClassifierSpec {
                kind,
                k_values: vec![1, 5],
                c_values: vec![0.1, 1.0],
                gamma_scales: vec![0.1, 1.0],
            })
            .collect()
    }

    #[test]
    fn separable_data_is_decoded_and_deterministic() {
        let (x, labels) = blobs(150, 8.0, 1);
        let plan = SplitPlan {
            n_splits: 3,
            seed: 5,
            ..SplitPlan::default()
        };
        let report = run_experiment(&x, &labels, "toy", &quick_specs(), &plan).unwrap();
        for r in &report.results {
            assert!(r.mean.acc >= 0.99, "{:?}", r.kind);
            assert_eq!(r.mean.micro_f1, r.mean.acc);
        }
        let again = run_experiment(&x, &labels, "toy", &quick_specs(), &plan).unwrap();
        assert_eq!(report, again);
        let mut csv = CsvBuf::new(None, &EVAL_HEADER);
        report.append_csv(&mut csv);
        assert_eq!(csv.as_str().lines().count(), 1 + 4 * 4);
    }

    #[test]
    fn shuffled_labels_stay_near_chance() {
        let (x, labels) = blobs(150, 8.0, 2);
        let mut shuffled = labels.labels.clone();
        shuffled.shuffle(&mut seeded(3));
        let labels = LabelVector::new(shuffled, 3).unwrap();
        let plan = SplitPlan {
            n_splits: 3,
            seed: 1,
            ..SplitPlan::default()
        };
        let report = run_experiment(&x, &labels, "shuffled", &quick_specs(), &plan).unwrap();
        for r in &report.results {
            assert!((r.mean.acc - 1.0 / 3.0).abs() < 0.15, "{:?} {}", r.kind, r.mean.acc);
        }
    }

    #[test]
    fn sample_std_over_splits() {
        let m = |a| Metrics {
            acc: a,
            auc: a,
            micro_f1: a,
            macro_f1: a,
        };
        let (mean, std) = mean_std(&[m(1.0), m(2.0), m(3.0)]);
        assert_eq!(mean.acc, 2.0);
        assert_eq!(std.acc, 1.0);
    }
}
