//! Partitioning Around Medoids: greedy BUILD followed by best-improvement SWAP.

use crate::clustering::KParams;
use crate::dataio::{DistanceMatrix, Partition};
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct KMedoidsResult<F> {
    pub partition: Partition,
    /// Medoid index of each cluster.
    pub medoids: Vec<usize>,
    pub build_cost: F,
    pub cost: F,
    pub swaps: usize,
}

/// Nearest and second-nearest medoid distance per point.
struct Cache<F> {
    near: Vec<usize>,
    d1: Vec<F>,
    d2: Vec<F>,
}

impl<F: Scalar> Cache<F> {
    fn new(d: &DistanceMatrix<F>, medoids: &[usize]) -> Self {
        let n = d.len();
        let mut c = Self {
            near: vec![0; n],
            d1: vec![F::infinity(); n],
            d2: vec![F::infinity(); n],
        };
        for i in 0..n {
            for (slot, &m) in medoids.iter().enumerate() {
                let v = d.get(i, m);
                if v < c.d1[i] {
                    c.d2[i] = c.d1[i];
                    c.d1[i] = v;
                    c.near[i] = slot;
                } else if v < c.d2[i] {
                    c.d2[i] = v;
                }
            }
        }
        c
    }

    fn cost(&self) -> F {
        self.d1.iter().copied().sum()
    }
}

fn build<F: Scalar>(d: &DistanceMatrix<F>, k: usize) -> Vec<usize> {
    let n = d.len();
    let mut best = vec![F::infinity(); n];
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    while medoids.len() < k {
        let mut pick = (usize::MAX, F::infinity());
        for c in (0..n).filter(|c| !medoids.contains(c)) {
            let total: F = (0..n).map(|i| best[i].min(d.get(i, c))).sum();
            if total < pick.1 {
                pick = (c, total);
            }
        }
        medoids.push(pick.0);
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(d.get(i, pick.0));
        }
    }
    medoids
}

/// PAM is deterministic: `_seed` and `p.restarts` are unused and `p.max_iter`
/// caps the number of swaps. Ties go to the lowest candidate index.
pub fn kmedoids<F: Scalar>(d: &DistanceMatrix<F>, p: KParams, _seed: u64) -> Result<KMedoidsResult<F>> {
    let n = d.len();
    p.check(n)?;
    let mut medoids = build(d, p.k);
    let mut cache = Cache::new(d, &medoids);
    let build_cost = cache.cost();
    let mut swaps = 0;
    let eps = F::of(1e-12) * build_cost.max(F::one());
    while swaps < p.max_iter {
        let mut best = (F::zero(), 0, 0);
        let mut corr = vec![F::zero(); p.k];
        for h in (0..n).filter(|h| !medoids.contains(h)) {
            // cost change of replacing slot s by h = shared + corr[s]
            corr.iter_mut().for_each(|v| *v = F::zero());
            let mut shared = F::zero();
            for j in 0..n {
                let dh = d.get(j, h);
                let stay = (dh - cache.d1[j]).min(F::zero());
                shared += stay;
                corr[cache.near[j]] += dh.min(cache.d2[j]) - cache.d1[j] - stay;
            }
            for (s, &c) in corr.iter().enumerate() {
                if shared + c < best.0 - eps {
                    best = (shared + c, s, h);
                }
            }
        }
        if best.0 >= -eps {
            break;
        }
        medoids[best.1] = best.2;
        cache = Cache::new(d, &medoids);
        swaps += 1;
    }
    let partition = Partition::from_labels(&cache.near);
    let mut ordered = vec![0; p.k];
    for (j, c) in partition.assignment().iter().enumerate() {
        ordered[c.expect("PAM assigns every point")] = medoids[cache.near[j]];
    }
    let cost = cache.cost();
    Ok(KMedoidsResult {
        partition,
        medoids: ordered,
        build_cost,
        cost,
        swaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::kmeans::tests::blobs;
    use crate::dataio::euclidean_distances;

    #[test]
    fn blobs_recovered_with_in_blob_medoids() {
        let (m, truth) = blobs(40, 10.0, 5);
        let d = euclidean_distances(&m).unwrap();
        let out = kmedoids(&d, KParams::with_k(2), 0).unwrap();
        assert_eq!(out.partition, Partition::from_labels(&truth));
        assert_eq!(truth[out.medoids[0]], 0);
        assert_eq!(truth[out.medoids[1]], 1);
        assert!(out.cost <= out.build_cost);
    }

    #[test]
    fn single_medoid_is_the_one_median() {
        let (m, _) = blobs(15, 3.0, 6);
        let d = euclidean_distances(&m).unwrap();
        let out = kmedoids(&d, KParams::with_k(1), 0).unwrap();
        let totals: Vec<f64> = (0..d.len()).map(|c| (0..d.len()).map(|i| d.get(i, c)).sum()).collect();
        let best = totals.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(totals[out.medoids[0]], best);
    }

    /// Exhaustive optimum over all medoid pairs as an upper bound on quality.
    #[test]
    fn swap_never_increases_cost_and_is_locally_optimal() {
        let (m, _) = blobs(12, 1.0, 7);
        let d = euclidean_distances(&m).unwrap();
        let n = d.len();
        let out = kmedoids(&d, KParams::with_k(3), 0).unwrap();
        assert!(out.cost <= out.build_cost);
        let cost_of = |meds: &[usize]| -> f64 {
            (0..n)
                .map(|i| meds.iter().map(|&c| d.get(i, c)).fold(f64::INFINITY, f64::min))
                .sum()
        };
        for s in 0..3 {
            for h in 0..n {
                let mut alt = out.medoids.clone();
                alt[s] = h;
                assert!(cost_of(&alt) >= out.cost - 1e-9);
            }
        }
        assert!((cost_of(&out.medoids) - out.cost).abs() < 1e-9);
    }
}
