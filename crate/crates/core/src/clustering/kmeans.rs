//! Lloyd's k-means with k-means++ seeding and best-of-restarts selection.

use rand::Rng;
use rayon::prelude::*;

use crate::dataio::{Matrix, Partition};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KParams {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
}

impl KParams {
    pub fn new(k: usize, restarts: usize, max_iter: usize) -> Result<Self> {
        if k == 0 || restarts == 0 || max_iter == 0 {
            return Err(Error::InvalidParameter(format!(
                "k, restarts and max_iter must be positive (k={k}, restarts={restarts}, max_iter={max_iter})"
            )));
        }
        Ok(Self { k, restarts, max_iter })
    }

    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            restarts: 10,
            max_iter: 300,
        }
    }

    pub(crate) fn check(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k > n {
            return Err(Error::InvalidParameter(format!("k={} must lie in 1..={n}", self.k)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansRun<F> {
    pub labels: Vec<usize>,
    pub centroids: Matrix<F>,
    pub inertia: F,
    /// Inertia after each assignment step.
    pub history: Vec<F>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<F> {
    pub partition: Partition,
    pub best: KMeansRun<F>,
    /// Final inertia of every restart, in restart order.
    pub restart_inertia: Vec<F>,
}

fn sq_dist<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |s, (&x, &y)| s + (x - y) * (x - y))
}

fn nearest<F: Scalar>(x: &[F], c: &Matrix<F>) -> (usize, F) {
    let mut best = (0, F::infinity());
    for j in 0..c.rows() {
        let d = sq_dist(x, c.row(j));
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus<F: Scalar>(m: &Matrix<F>, k: usize, rng: &mut impl Rng) -> Matrix<F> {
    let n = m.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<F> = (0..n).map(|i| sq_dist(m.row(i), m.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: F = d2.iter().copied().sum();
        let next = if total > F::zero() {
            let mut r = F::of(rng.random::<f64>()) * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > F::zero() {
                    pick = Some(i);
                    if r < w {
                        break;
                    }
                    r -= w;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, v) in d2.iter_mut().enumerate() {
            *v = v.min(sq_dist(m.row(i), m.row(next)));
        }
    }
    m.select_rows(&chosen)
}

fn centroids_of<F: Scalar>(m: &Matrix<F>, labels: &[usize], k: usize) -> (Matrix<F>, Vec<usize>) {
    let mut c = Matrix::zeros(k, m.cols());
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (a, &b) in c.row_mut(l).iter_mut().zip(m.row(i)) {
            *a += b;
        }
    }
    for (j, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            let s = F::of_usize(cnt);
            c.row_mut(j).iter_mut().for_each(|v| *v /= s);
        }
    }
    (c, counts)
}

/// Centroids of `labels`, after moving the point farthest from its centroid
/// into each empty cluster.
fn reseed_empty<F: Scalar>(m: &Matrix<F>, labels: &mut [usize], k: usize) -> Matrix<F> {
    let n = m.rows();
    let (mut c, mut counts) = centroids_of(m, labels, k);
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let far = (0..n)
            .filter(|&i| counts[labels[i]] > 1)
            .map(|i| (i, sq_dist(m.row(i), c.row(labels[i]))))
            .fold(None, |best: Option<(usize, F)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            })
            .map(|(i, _)| i)
            .expect("k <= n leaves a cluster with two members");
        labels[far] = empty;
        (c, counts) = centroids_of(m, labels, k);
    }
    c
}

fn inertia<F: Scalar>(m: &Matrix<F>, labels: &[usize], c: &Matrix<F>) -> F {
    (0..m.rows()).map(|i| sq_dist(m.row(i), c.row(labels[i]))).sum()
}

/// One Lloyd run from a k-means++ start.
pub fn lloyd<F: Scalar>(m: &Matrix<F>, k: usize, max_iter: usize, rng: &mut impl Rng) -> KMeansRun<F> {
    let n = m.rows();
    let mut centroids: Matrix<F> = plus_plus(m, k, rng);
    let mut labels: Vec<usize> = (0..n).map(|i| nearest(m.row(i), &centroids).0).collect();
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        centroids = reseed_empty(m, &mut labels, k);
        history.push(inertia(m, &labels, &centroids));
        // ties keep the current assignment so duplicates cannot oscillate
        let next: Vec<usize> = (0..n)
            .map(|i| {
                let (j, d) = nearest(m.row(i), &centroids);
                if sq_dist(m.row(i), centroids.row(labels[i])) <= d {
                    labels[i]
                } else {
                    j
                }
            })
            .collect();
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
    }
    if !converged {
        centroids = reseed_empty(m, &mut labels, k);
    }
    let inertia = inertia(m, &labels, &centroids);
    KMeansRun {
        labels,
        centroids,
        inertia,
        history,
        converged,
    }
}

/// Best of `p.restarts` Lloyd runs by final inertia (earliest restart on ties).
/// Restart `r` draws from stream `r` of `seed`.
pub fn kmeans<F: Scalar>(m: &Matrix<F>, p: KParams, seed: u64) -> Result<KMeansResult<F>> {
    p.check(m.rows())?;
    if p.restarts == 0 || p.max_iter == 0 {
        return Err(Error::InvalidParameter("restarts and max_iter must be positive".into()));
    }
    let runs: Vec<KMeansRun<F>> = (0..p.restarts)
        .into_par_iter()
        .map(|r| lloyd(m, p.k, p.max_iter, &mut stream_rng(seed, r as u64)))
        .collect();
    let restart_inertia: Vec<F> = runs.iter().map(|r| r.inertia).collect();
    let mut best = 0;
    for (r, &v) in restart_inertia.iter().enumerate() {
        if v < restart_inertia[best] {
            best = r;
        }
    }
    let best = runs.into_iter().nth(best).expect("at least one restart");
    Ok(KMeansResult {
        partition: Partition::from_labels(&best.labels),
        best,
        restart_inertia,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand_distr::{Distribution, StandardNormal};

    pub(crate) fn blobs(n_per: usize, sep: f64, seed: u64) -> (Matrix<f64>, Vec<usize>) {
        let mut rng = seeded(seed);
        let mut data = Vec::new();
        let mut truth = Vec::new();
        for b in 0..2 {
            for _ in 0..n_per {
                let x: f64 = StandardNormal.sample(&mut rng);
                let y: f64 = StandardNormal.sample(&mut rng);
                data.push(x + b as f64 * sep);
                data.push(y);
                truth.push(b);
            }
        }
        (Matrix::from_vec(2 * n_per, 2, data).unwrap(), truth)
    }

    #[test]
    fn separated_blobs_recovered() {
        let (m, truth) = blobs(50, 10.0, 1);
        let out = kmeans(&m, KParams::with_k(2), 7).unwrap();
        assert_eq!(out.partition, Partition::from_labels(&truth));
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let (m, _) = blobs(4, 3.0, 2);
        let out = kmeans(&m, KParams::with_k(8), 1).unwrap();
        assert_eq!(out.partition.k(), 8);
        assert_eq!(out.best.inertia, 0.0);
    }

    #[test]
    fn inertia_history_is_non_increasing() {
        let (m, _) = blobs(40, 2.0, 3);
        for seed in 0..10 {
            let run = lloyd(&m, 5, 100, &mut stream_rng(seed, 0));
            for w in run.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", run.history);
            }
        }
    }

    #[test]
    fn best_restart_is_minimal_and_deterministic() {
        let (m, _) = blobs(30, 1.5, 4);
        let a = kmeans(&m, KParams::new(4, 6, 100).unwrap(), 11).unwrap();
        assert!(a.restart_inertia.iter().all(|&v| a.best.inertia <= v));
        let b = kmeans(&m, KParams::new(4, 6, 100).unwrap(), 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_points_with_large_k() {
        let m = Matrix::from_vec(4, 1, vec![1.0, 1.0, 1.0, 2.0]).unwrap();
        let out = kmeans(&m, KParams::with_k(3), 0).unwrap();
        assert_eq!(out.partition.k(), 3);
    }

    #[test]
    fn rejects_k_above_n() {
        let m = Matrix::<f64>::zeros(3, 2);
        assert!(kmeans(&m, KParams::with_k(4), 0).is_err());
    }
}
