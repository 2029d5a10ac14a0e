//! Matrix and label containers, distance/similarity construction and the
//! CSV formats shared by every stage of the pipeline.

pub mod csv;
mod matrix;

pub use matrix::{dot, Matrix};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Stimuli × units matrix of z-scored, trial-averaged spike counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix<F: Scalar> {
    pub values: Matrix<F>,
    pub stimulus_ids: Vec<String>,
    pub unit_ids: Vec<String>,
}

impl<F: Scalar> ResponseMatrix<F> {
    pub fn new(values: Matrix<F>, stimulus_ids: Vec<String>, unit_ids: Vec<String>) -> Result<Self> {
        if values.rows() != stimulus_ids.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} stimulus ids",
                values.rows(),
                stimulus_ids.len()
            )));
        }
        if values.cols() != unit_ids.len() {
            return Err(Error::Shape(format!(
                "{} columns but {} unit ids",
                values.cols(),
                unit_ids.len()
            )));
        }
        Ok(Self {
            values,
            stimulus_ids,
            unit_ids,
        })
    }

    /// Z-scores raw counts column-wise and wraps them with identifiers.
    pub fn from_counts(counts: &Matrix<F>, stimulus_ids: Vec<String>, unit_ids: Vec<String>) -> Result<Self> {
        Self::new(zscore_columns(counts)?, stimulus_ids, unit_ids)
    }

    pub fn n_stimuli(&self) -> usize {
        self.values.rows()
    }

    pub fn n_units(&self) -> usize {
        self.values.cols()
    }
}

/// Pairwise Euclidean distances; symmetric with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix<F: Scalar> {
    pub values: Matrix<F>,
}

impl<F: Scalar> DistanceMatrix<F> {
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.values.get(i, j)
    }

    /// Wraps a precomputed matrix after checking squareness, symmetry and the diagonal.
    pub fn from_matrix(values: Matrix<F>) -> Result<Self> {
        check_square_symmetric(&values)?;
        for i in 0..values.rows() {
            if values.get(i, i) != F::zero() {
                return Err(Error::Shape(format!("distance diagonal entry {i} is nonzero")));
            }
        }
        Ok(Self { values })
    }

    /// Off-diagonal entries (upper triangle), unsorted.
    pub fn upper_triangle(&self) -> Vec<F> {
        let n = self.len();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            out.extend_from_slice(&self.values.row(i)[i + 1..]);
        }
        out
    }

    /// Median of the off-diagonal distances.
    pub fn median(&self) -> F {
        let mut v = self.upper_triangle();
        if v.is_empty() {
            return F::zero();
        }
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        let m = v.len();
        if m % 2 == 1 {
            v[m / 2]
        } else {
            (v[m / 2 - 1] + v[m / 2]) / F::of(2.0)
        }
    }
}

/// Gaussian-kernel affinities with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix<F: Scalar> {
    pub values: Matrix<F>,
    pub sigma: F,
}

impl<F: Scalar> SimilarityMatrix<F> {
    /// Wraps an arbitrary affinity matrix (used for planted models and tests).
    /// Requires symmetry, a zero diagonal and entries in `[0, 1]`.
    pub fn from_matrix(values: Matrix<F>) -> Result<Self> {
        check_square_symmetric(&values)?;
        for i in 0..values.rows() {
            for j in 0..values.cols() {
                let v = values.get(i, j);
                if i == j && v != F::zero() {
                    return Err(Error::Shape(format!("similarity diagonal entry {i} is nonzero")));
                }
                if !(v >= F::zero() && v <= F::one()) {
                    return Err(Error::InvalidParameter(format!(
                        "similarity entry ({i},{j}) = {v} outside [0,1]"
                    )));
                }
            }
        }
        Ok(Self {
            values,
            sigma: F::nan(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }
}

fn check_square_symmetric<F: Scalar>(m: &Matrix<F>) -> Result<()> {
    if m.rows() != m.cols() {
        return Err(Error::Shape(format!("{}x{} matrix is not square", m.rows(), m.cols())));
    }
    let tol = F::of(1e-12);
    for i in 0..m.rows() {
        for j in i + 1..m.cols() {
            let (a, b) = (m.get(i, j), m.get(j, i));
            if !a.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
            if (a - b).abs() > tol * F::one().max(a.abs()) {
                return Err(Error::Shape(format!("matrix not symmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

/// Per-stimulus class labels in `0..n_classes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::InvalidParameter("n_classes must be positive".into()));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(Error::InvalidParameter(format!(
                "label {l} at position {i} is outside 0..{n_classes}"
            )));
        }
        Ok(Self { labels, n_classes })
    }

    /// Infers `n_classes` as `max + 1`.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let n = labels.iter().max().map_or(1, |&m| m + 1);
        Self::new(labels, n)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    pub fn subset(&self, idx: &[usize]) -> LabelVector {
        LabelVector {
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }
}

/// Cluster assignment per stimulus; `None` marks noise.
///
/// Cluster ids are always contiguous `0..k`, numbered by first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    assignment: Vec<Option<usize>>,
    k: usize,
}

impl Partition {
    /// Builds a partition from arbitrary cluster ids, relabelling them
    /// contiguously in order of first appearance.
    pub fn from_raw(raw: &[Option<usize>]) -> Self {
        let mut map = std::collections::HashMap::new();
        let assignment = raw
            .iter()
            .map(|c| {
                c.map(|c| {
                    let next = map.len();
                    *map.entry(c).or_insert(next)
                })
            })
            .collect();
        Self {
            assignment,
            k: map.len(),
        }
    }

    pub fn from_labels(labels: &[usize]) -> Self {
        let raw: Vec<_> = labels.iter().map(|&l| Some(l)).collect();
        Self::from_raw(&raw)
    }

    pub fn all_noise(n: usize) -> Self {
        Self {
            assignment: vec![None; n],
            k: 0,
        }
    }

    pub fn assignment(&self) -> &[Option<usize>] {
        &self.assignment
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn noise_count(&self) -> usize {
        self.assignment.iter().filter(|c| c.is_none()).count()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for c in self.assignment.iter().flatten() {
            s[*c] += 1;
        }
        s
    }

    /// Member indices per cluster.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, c) in self.assignment.iter().enumerate() {
            if let Some(c) = c {
                out[*c].push(i);
            }
        }
        out
    }

    /// Dense labels where each noise point becomes its own singleton cluster.
    pub fn with_noise_as_singletons(&self) -> Vec<usize> {
        let mut next = self.k;
        self.assignment
            .iter()
            .map(|c| match c {
                Some(c) => *c,
                None => {
                    next += 1;
                    next - 1
                }
            })
            .collect()
    }

    /// Same grouping up to relabelling (noise must coincide exactly).
    pub fn same_grouping(&self, other: &Partition) -> bool {
        // canonical form makes this a plain comparison
        self == other
    }
}

/// Pairwise Euclidean distances between the rows of `m`.
pub fn euclidean_distances<F: Scalar>(m: &Matrix<F>) -> Result<DistanceMatrix<F>> {
    if m.rows() < 2 {
        return Err(Error::Shape(format!("need at least 2 rows, got {}", m.rows())));
    }
    m.check_finite()?;
    let n = m.rows();
    let upper: Vec<Vec<F>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = m.row(i);
            (i + 1..n)
                .map(|j| {
                    let b = m.row(j);
                    let mut s = F::zero();
                    for (x, y) in a.iter().zip(b) {
                        let t = *x - *y;
                        s += t * t;
                    }
                    s.sqrt()
                })
                .collect()
        })
        .collect();
    let mut d = Matrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            d.set(i, j, v);
            d.set(j, i, v);
        }
    }
    Ok(DistanceMatrix { values: d })
}

/// `a_ij = exp(-d_ij^2 / (2 sigma^2))` off the diagonal, zero on it.
pub fn gaussian_similarity<F: Scalar>(d: &DistanceMatrix<F>, sigma: F) -> Result<SimilarityMatrix<F>> {
    if !(sigma > F::zero()) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let n = d.len();
    let denom = F::of(2.0) * sigma * sigma;
    let values = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            F::zero()
        } else {
            let x = d.get(i, j);
            (-(x * x) / denom).exp()
        }
    });
    Ok(SimilarityMatrix { values, sigma })
}

/// Column-wise z-score with population standard deviation. Constant columns
/// become all zeros.
pub fn zscore_columns<F: Scalar>(counts: &Matrix<F>) -> Result<Matrix<F>> {
    let (n, p) = (counts.rows(), counts.cols());
    if n < 2 {
        return Err(Error::Shape(format!("need at least 2 rows to z-score, got {n}")));
    }
    counts.check_finite()?;
    let nf = F::of_usize(n);
    let mut out = Matrix::zeros(n, p);
    for c in 0..p {
        let first = counts.get(0, c);
        if (1..n).all(|r| counts.get(r, c) == first) {
            continue;
        }
        let mean = (0..n).map(|r| counts.get(r, c)).sum::<F>() / nf;
        let var = (0..n)
            .map(|r| {
                let t = counts.get(r, c) - mean;
                t * t
            })
            .sum::<F>()
            / nf;
        let sd = var.sqrt();
        if sd == F::zero() {
            continue;
        }
        for r in 0..n {
            out.set(r, c, (counts.get(r, c) - mean) / sd);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn naive_distances(m: &Matrix<f64>) -> Vec<Vec<f64>> {
        let n = m.rows();
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for u in 0..m.cols() {
                    s += (m.get(i, u) - m.get(j, u)).powi(2);
                }
                out[i][j] = s.sqrt();
            }
        }
        out
    }

    #[test]
    fn three_four_five() {
        let m = Matrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0], vec![3.0, 4.0]]).unwrap();
        let d = euclidean_distances(&m).unwrap();
        assert_eq!(d.get(0, 1), 5.0);
        assert_eq!(d.get(1, 0), 5.0);
        assert_eq!(d.get(1, 2), 0.0);
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn distances_match_double_loop() {
        let mut rng = crate::rng::seeded(11);
        for (n, p) in [(5, 3), (10, 4)] {
            let m = Matrix::from_fn(n, p, |_, _| rng.random_range(-3.0..3.0));
            let d = euclidean_distances(&m).unwrap();
            let o = naive_distances(&m);
            for i in 0..n {
                for j in 0..n {
                    assert!((d.get(i, j) - o[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn distances_in_f32() {
        let m = Matrix::from_rows(&[vec![0.0f32, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(euclidean_distances(&m).unwrap().get(0, 1), 5.0f32);
    }

    #[test]
    fn non_finite_rejected_with_location() {
        let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![f64::NAN, 0.0]]).unwrap();
        match euclidean_distances(&m) {
            Err(Error::NonFinite { row: 1, col: 0 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let one = Matrix::from_rows(&[vec![0.0]]).unwrap();
        assert!(euclidean_distances(&one).is_err());
    }

    #[test]
    fn kernel_values() {
        let sigma = 2.5;
        let half = sigma * (2.0f64 * 2.0f64.ln()).sqrt();
        let m = Matrix::from_rows(&[vec![0.0], vec![0.0], vec![half]]).unwrap();
        let d = euclidean_distances(&m).unwrap();
        let a = gaussian_similarity(&d, sigma).unwrap();
        assert_eq!(a.values.get(0, 1), 1.0);
        assert!((a.values.get(0, 2) - 0.5).abs() < 1e-15);
        for i in 0..3 {
            assert_eq!(a.values.get(i, i), 0.0);
        }
        assert!(gaussian_similarity(&d, 0.0).is_err());
        assert!(gaussian_similarity(&d, -1.0).is_err());
    }

    #[test]
    fn zscore_examples() {
        let m = Matrix::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let z = zscore_columns(&m).unwrap();
        let expect = 1.5f64.sqrt(); // (3-2)/sqrt(2/3)
        assert!((z.get(0, 0) + expect).abs() < 1e-12);
        assert!(z.get(1, 0).abs() < 1e-12);
        assert!((z.get(2, 0) - expect).abs() < 1e-12);
        assert!((expect - 1.224744871391589).abs() < 1e-12);
        for r in 0..3 {
            assert_eq!(z.get(r, 1), 0.0);
        }
    }

    #[test]
    fn partition_canonical_and_noise() {
        let p = Partition::from_raw(&[Some(7), None, Some(3), Some(7)]);
        assert_eq!(p.assignment(), &[Some(0), None, Some(1), Some(0)]);
        assert_eq!(p.k(), 2);
        assert_eq!(p.noise_count(), 1);
        assert_eq!(p.with_noise_as_singletons(), vec![0, 2, 1, 0]);
        assert!(p.same_grouping(&Partition::from_raw(&[Some(1), None, Some(0), Some(1)])));
    }

    #[test]
    fn label_vector_checks() {
        assert!(LabelVector::new(vec![0, 3], 3).is_err());
        let l = LabelVector::from_labels(vec![0, 2, 2]).unwrap();
        assert_eq!(l.n_classes, 3);
        assert_eq!(l.class_counts(), vec![1, 0, 2]);
    }

    proptest! {
        #[test]
        fn zscore_invariants_and_idempotence(
            rows in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 3), 2..20)
        ) {
            let m = Matrix::from_rows(&rows).unwrap();
            let z = zscore_columns(&m).unwrap();
            let n = z.rows() as f64;
            for c in 0..z.cols() {
                let col: Vec<f64> = (0..z.rows()).map(|r| z.get(r, c)).collect();
                if col.iter().all(|&v| v == 0.0) { continue; }
                let mean = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!((var - 1.0).abs() < 1e-9);
            }
            let zz = zscore_columns(&z).unwrap();
            for (a, b) in z.as_slice().iter().zip(zz.as_slice()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn kernel_monotone(d1 in 0.01f64..50.0, d2 in 0.01f64..50.0, s1 in 0.1f64..20.0, s2 in 0.1f64..20.0) {
            let k = |d: f64, s: f64| {
                let m = Matrix::from_rows(&[vec![0.0], vec![d]]).unwrap();
                gaussian_similarity(&euclidean_distances(&m).unwrap(), s).unwrap().values.get(0, 1)
            };
            let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(k(lo, s1) >= k(hi, s1));
            let (slo, shi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
            prop_assert!(k(d1, slo) <= k(d1, shi));
        }

        #[test]
        fn triangle_inequality(rows in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 4), 3..10)) {
            let m = Matrix::from_rows(&rows).unwrap();
            let d = euclidean_distances(&m).unwrap();
            let n = d.len();
            for i in 0..n { for j in 0..n { for k in 0..n {
                prop_assert!(d.get(i, k) <= d.get(i, j) + d.get(j, k) + 1e-12);
            }}}
        }
    }
}
