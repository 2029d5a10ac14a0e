//! Multiclass wrappers: one-vs-rest for plain SVMs and one-vs-one ECOC.

use serde::{Deserialize, Serialize};

use crate::classify::knn::KnnModel;
use crate::classify::svm::{train_svm, BinarySvm, Kernel, KernelSource};
use crate::dataio::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassifierKind {
    Knn,
    LinearSvm,
    RbfSvm,
    EcocLinearSvm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [Self::LinearSvm, Self::RbfSvm, Self::EcocLinearSvm, Self::Knn];

    pub fn name(self) -> &'static str {
        match self {
            Self::Knn => "knn",
            Self::LinearSvm => "linear_svm",
            Self::RbfSvm => "rbf_svm",
            Self::EcocLinearSvm => "ecoc_linear_svm",
        }
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown classifier '{s}'")))
    }
}

/// One hyperparameter setting. `gamma` is absolute (already divided by the
/// feature count).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Hyper {
    Knn { k: usize },
    Linear { c: f64 },
    Rbf { c: f64, gamma: f64 },
    Ecoc { c: f64 },
}

impl Hyper {
    /// Setting with the same predictions: two-class ECOC is one linear machine.
    pub fn canonical(self, n_classes: usize) -> Self {
        match self {
            Self::Ecoc { c } if n_classes == 2 => Self::Linear { c },
            h => h,
        }
    }
}

impl std::fmt::Display for Hyper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        use crate::dataio::csv::fmt_float;
        match self {
            Self::Knn { k } => write!(f, "k={k}"),
            Self::Linear { c } | Self::Ecoc { c } => write!(f, "C={}", fmt_float(*c)),
            Self::Rbf { c, gamma } => write!(f, "C={};gamma={}", fmt_float(*c), fmt_float(*gamma)),
        }
    }
}

pub fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneVsRest<F> {
    pub kernel: Kernel,
    pub train: Vec<usize>,
    /// One machine per class, or a single machine (+1 = class 0) for two classes.
    pub machines: Vec<BinarySvm<F>>,
    pub n_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairMachine<F> {
    pub classes: (usize, usize),
    /// Global indices of the samples this machine was trained on.
    pub train: Vec<usize>,
    pub svm: BinarySvm<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ecoc<F> {
    pub kernel: Kernel,
    pub machines: Vec<PairMachine<F>>,
    pub n_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model<F> {
    Knn(KnnModel),
    OneVsRest(OneVsRest<F>),
    Ecoc(Ecoc<F>),
}

/// Labelled samples addressed by global index.
#[derive(Debug, Clone, Copy)]
pub struct Dataset<'a, F: Scalar> {
    pub source: &'a KernelSource<F>,
    pub labels: &'a [usize],
    pub n_classes: usize,
}

fn check_classes(labels: &[usize], n_classes: usize) -> Result<()> {
    if n_classes < 2 {
        return Err(Error::InvalidParameter("need at least 2 classes".into()));
    }
    let mut seen = vec![false; n_classes];
    labels.iter().for_each(|&l| seen[l] = true);
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidParameter(format!(
            "class {c} is missing from the training set"
        )));
    }
    Ok(())
}

fn sub_block<F: Scalar>(k: &Matrix<F>, idx: &[usize]) -> Matrix<F> {
    Matrix::from_fn(idx.len(), idx.len(), |a, b| k.get(idx[a], idx[b]))
}

pub fn train_one_vs_rest<F: Scalar>(
    data: Dataset<'_, F>,
    train: &[usize],
    kernel: Kernel,
    c: f64,
) -> Result<OneVsRest<F>> {
    let labels: Vec<usize> = train.iter().map(|&i| data.labels[i]).collect();
    check_classes(&labels, data.n_classes)?;
    let k = data.source.block(kernel, train, train);
    let positives: Vec<usize> = if data.n_classes == 2 {
        vec![0]
    } else {
        (0..data.n_classes).collect()
    };
    let machines = positives
        .into_iter()
        .map(|p| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == p { 1.0 } else { -1.0 }).collect();
            train_svm(&k, &y, c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OneVsRest {
        kernel,
        train: train.to_vec(),
        machines,
        n_classes: data.n_classes,
    })
}

pub fn train_ecoc<F: Scalar>(data: Dataset<'_, F>, train: &[usize], kernel: Kernel, c: f64) -> Result<Ecoc<F>> {
    let labels: Vec<usize> = train.iter().map(|&i| data.labels[i]).collect();
    check_classes(&labels, data.n_classes)?;
    let k = data.source.block(kernel, train, train);
    let mut machines = Vec::new();
    for a in 0..data.n_classes {
        for b in a + 1..data.n_classes {
            let local: Vec<usize> = (0..train.len()).filter(|&i| labels[i] == a || labels[i] == b).collect();
            let y: Vec<f64> = local.iter().map(|&i| if labels[i] == a { 1.0 } else { -1.0 }).collect();
            let svm = train_svm(&sub_block(&k, &local), &y, c)?;
            machines.push(PairMachine {
                classes: (a, b),
                train: local.iter().map(|&i| train[i]).collect(),
                svm,
            });
        }
    }
    Ok(Ecoc {
        kernel,
        machines,
        n_classes: data.n_classes,
    })
}

pub fn fit<F: Scalar>(data: Dataset<'_, F>, train: &[usize], hyper: Hyper) -> Result<Model<F>> {
    Ok(match hyper {
        Hyper::Knn { k } => {
            if k == 0 || k > train.len() {
                return Err(Error::InvalidParameter(format!("k={k} outside 1..={}", train.len())));
            }
            Model::Knn(KnnModel {
                train: train.to_vec(),
                labels: train.iter().map(|&i| data.labels[i]).collect(),
                k,
                n_classes: data.n_classes,
            })
        }
        Hyper::Linear { c } => Model::OneVsRest(train_one_vs_rest(data, train, Kernel::Linear, c)?),
        Hyper::Rbf { c, gamma } => Model::OneVsRest(train_one_vs_rest(data, train, Kernel::Rbf { gamma }, c)?),
        Hyper::Ecoc { c } => Model::Ecoc(train_ecoc(data, train, Kernel::Linear, c)?),
    })
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl<F: Scalar> Model<F> {
    /// Predicted class and per-class scores in `[0, 1]` for every query.
    pub fn predict(&self, src: &KernelSource<F>, queries: &[usize]) -> (Vec<usize>, Vec<Vec<f64>>) {
        match self {
            Model::Knn(m) => queries.iter().map(|&q| m.predict(src, q)).unzip(),
            Model::OneVsRest(m) => {
                let k = src.block(m.kernel, &m.train, queries);
                queries
                    .iter()
                    .enumerate()
                    .map(|(qi, _)| {
                        let f: Vec<f64> = m
                            .machines
                            .iter()
                            .map(|s| s.decision(|i| k.get(i, qi)).as_f64())
                            .collect();
                        if m.n_classes == 2 {
                            let pred = if f[0] >= 0.0 { 0 } else { 1 };
                            (pred, vec![logistic(f[0]), logistic(-f[0])])
                        } else {
                            (argmax_first(&f), f.iter().map(|&v| logistic(v)).collect())
                        }
                    })
                    .unzip()
            }
            Model::Ecoc(m) => {
                let nc = m.n_classes;
                let mut votes = vec![vec![0usize; nc]; queries.len()];
                let mut margin = vec![vec![0.0f64; nc]; queries.len()];
                for pm in &m.machines {
                    let k = src.block(m.kernel, &pm.train, queries);
                    let (a, b) = pm.classes;
                    for qi in 0..queries.len() {
                        let f = pm.svm.decision(|i| k.get(i, qi)).as_f64();
                        votes[qi][if f >= 0.0 { a } else { b }] += 1;
                        margin[qi][a] += f;
                        margin[qi][b] -= f;
                    }
                }
                (0..queries.len())
                    .map(|qi| {
                        let mut best = 0;
                        for c in 1..nc {
                            let (v, bv) = (votes[qi][c], votes[qi][best]);
                            if v > bv || (v == bv && margin[qi][c] > margin[qi][best]) {
                                best = c;
                            }
                        }
                        let scores = margin[qi].iter().map(|&s| logistic(s / (nc - 1) as f64)).collect();
                        (best, scores)
                    })
                    .unzip()
            }
        }
    }

    pub fn svms(&self) -> Vec<&BinarySvm<F>> {
        match self {
            Model::Knn(_) => Vec::new(),
            Model::OneVsRest(m) => m.machines.iter().collect(),
            Model::Ecoc(m) => m.machines.iter().map(|p| &p.svm).collect(),
        }
    }

    pub fn converged(&self) -> bool {
        self.svms().iter().all(|s| s.converged)
    }
}
