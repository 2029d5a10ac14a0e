//! Dominant-set clustering: discrete replicator dynamics on a similarity
//! matrix, peeled off one cluster at a time.

use crate::dataio::{dot, Matrix, Partition, SimilarityMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 10_000;
pub const SUPPORT_CUTOFF: f64 = 1e-5;
/// Relative tilt of the starting barycenter: vertex `i` starts with weight
/// proportional to `1 + TIE_BREAK * (n-1-i)/(n-1)`, so symmetric ties resolve
/// toward the lowest-index block. It must dominate `TOLERANCE`, otherwise the
/// first step is already below tolerance at a symmetric saddle.
pub const TIE_BREAK: f64 = 1e-3;
/// Coordinates below this value that are shrinking are dropped to zero.
pub const PRUNE_BELOW: f64 = 1e-12;
/// Coordinates below this value may be dropped early when that raises the
/// payoff.
const EAGER_PRUNE_BELOW: f64 = 1e-3;
/// Relative margin by which a vertex's payoff must differ from the average
/// before the state is moved toward or away from it.
const REVIVE_MARGIN: f64 = 1e-6;
/// Pruned vertices are re-examined, and small losing coordinates dropped,
/// this often before convergence.
const REVIVE_EVERY: usize = 100;

/// One replicator update.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicatorState<F> {
    /// Updated point on the simplex.
    pub x: Vec<F>,
    /// `x·A·x` at the input point.
    pub payoff: F,
}

/// `x_i ← x_i (Ax)_i / (x·A·x)`.
pub fn replicator_step<F: Scalar>(a: &Matrix<F>, x: &[F]) -> Result<ReplicatorState<F>> {
    let mut ax = vec![F::zero(); x.len()];
    let mut next = vec![F::zero(); x.len()];
    let payoff = step_into(a, x, &mut ax, &mut next)?;
    Ok(ReplicatorState { x: next, payoff })
}

fn step_into<F: Scalar>(a: &Matrix<F>, x: &[F], ax: &mut [F], next: &mut [F]) -> Result<F> {
    a.matvec(x, ax);
    let payoff = dot(x, ax);
    if !(payoff > F::zero()) {
        return Err(Error::ZeroPayoff);
    }
    for i in 0..x.len() {
        next[i] = x[i] * ax[i] / payoff;
    }
    Ok(payoff)
}

pub fn payoff<F: Scalar>(a: &Matrix<F>, x: &[F]) -> F {
    let mut ax = vec![F::zero(); x.len()];
    a.matvec(x, &mut ax);
    dot(x, &ax)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominantSet<F> {
    /// Vertices with `x_i > 1e-5`, ascending.
    pub support: Vec<usize>,
    /// Final state of the dynamics (full length).
    pub x: Vec<F>,
    pub payoff: F,
    pub iterations: usize,
    pub converged: bool,
    /// `x·A·x` at every visited point, starting with the barycenter.
    pub payoff_trace: Vec<F>,
}

/// Runs the dynamics from the (tie-broken) barycenter until the largest
/// coordinate change drops below `1e-8` without growing, or 10 000
/// iterations elapse.
///
/// Coordinates that fall below [`PRUNE_BELOW`] while losing mass are set to
/// zero and the dynamics continue on the remaining vertices; small losing
/// coordinates are also dropped early when that does not lower `x·A·x`. At
/// convergence (and every [`REVIVE_EVERY`] iterations before it while
/// vertices are pruned) a line search corrects the worst remaining violation
/// of the fixed-point conditions and iteration resumes, so the result
/// satisfies the same conditions as the plain dynamics.
pub fn extract_dominant_set<F: Scalar>(a: &Matrix<F>) -> Result<DominantSet<F>> {
    let n = a.rows();
    if n == 0 {
        return Err(Error::InvalidParameter("empty similarity matrix".into()));
    }
    if n == 1 {
        return Ok(DominantSet {
            support: vec![0],
            x: vec![F::one()],
            payoff: F::zero(),
            iterations: 0,
            converged: true,
            payoff_trace: vec![F::zero()],
        });
    }
    let tilt = F::of(TIE_BREAK) / F::of_usize(n - 1);
    let mut full: Vec<F> = (0..n).map(|i| F::one() + tilt * F::of_usize(n - 1 - i)).collect();
    let total: F = full.iter().copied().sum();
    full.iter_mut().for_each(|v| *v /= total);

    let tol = F::of(TOLERANCE);
    let prune = F::of(PRUNE_BELOW);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    // `active` indexes `a`; `local` is `a` restricted to `active`
    let mut active: Vec<usize> = (0..n).collect();
    let mut local: Option<Matrix<F>> = None;
    let mut x = full.clone();
    let mut ax = vec![F::zero(); n];
    let mut next = vec![F::zero(); n];
    let mut last_delta = F::infinity();
    while iterations < MAX_ITERATIONS {
        let m = local.as_ref().unwrap_or(a);
        let p = step_into(m, &x, &mut ax, &mut next)?;
        trace.push(p);
        iterations += 1;
        let delta = x.iter().zip(&next).fold(F::zero(), |m, (&u, &v)| m.max((u - v).abs()));
        std::mem::swap(&mut x, &mut next);

        let mut dropped = 0;
        let mut zeros = 0;
        for k in 0..x.len() {
            if x[k] > F::zero() && x[k] < prune && ax[k] < p {
                x[k] = F::zero();
                dropped += 1;
            }
            zeros += (x[k] == F::zero()) as usize;
        }
        if dropped > 0 {
            let s: F = x.iter().copied().sum();
            x.iter_mut().for_each(|v| *v /= s);
        }
        if iterations % REVIVE_EVERY == 0 {
            zeros += prune_losers(m, &mut x, &ax, p);
        }
        if 4 * zeros > x.len() {
            let keep: Vec<usize> = (0..x.len()).filter(|&k| x[k] > F::zero()).collect();
            x = keep.iter().map(|&k| x[k]).collect();
            active = keep.iter().map(|&k| active[k]).collect();
            local = Some(a.submatrix(&active));
            ax.truncate(x.len());
            next.truncate(x.len());
        }

        // a growing step means we are still leaving a (near) saddle point
        let settled = delta < tol && delta <= last_delta;
        if settled || (iterations % REVIVE_EVERY == 0 && active.len() < n) {
            if revive(a, &mut active, &mut x, &mut local) {
                ax.resize(x.len(), F::zero());
                next.resize(x.len(), F::zero());
                last_delta = F::infinity();
                continue;
            }
            if settled {
                converged = true;
                break;
            }
        }
        last_delta = delta;
    }
    full.iter_mut().for_each(|v| *v = F::zero());
    for (&i, &v) in active.iter().zip(&x) {
        full[i] = v;
    }
    let payoff = payoff(a, &full);
    trace.push(payoff);
    let cutoff = F::of(SUPPORT_CUTOFF);
    let support = (0..n).filter(|&i| full[i] > cutoff).collect();
    Ok(DominantSet {
        support,
        x: full,
        payoff,
        iterations,
        converged,
        payoff_trace: trace,
    })
}

/// Drops small coordinates whose removal raises the payoff. Removing mass `m`
/// from a vertex with `(Ax)_i < p` gains when `m ≤ 2(p − (Ax)_i)/p`; half of
/// that bound selects candidates and an exact comparison accepts them.
/// Returns the number of coordinates dropped.
fn prune_losers<F: Scalar>(a: &Matrix<F>, x: &mut [F], ax: &[F], p: F) -> usize {
    let cap = F::of(EAGER_PRUNE_BELOW);
    let losers: Vec<usize> = (0..x.len())
        .filter(|&k| x[k] > F::zero() && x[k] < cap && ax[k] < p && x[k] * p <= p - ax[k])
        .collect();
    if losers.is_empty() {
        return 0;
    }
    let mut trial = x.to_vec();
    for &k in &losers {
        trial[k] = F::zero();
    }
    let s: F = trial.iter().copied().sum();
    trial.iter_mut().for_each(|v| *v /= s);
    if payoff(a, &trial) < payoff(a, x) {
        return 0;
    }
    x.copy_from_slice(&trial);
    losers.len()
}

/// Exact line search from the current state toward or away from the vertex
/// that most violates the fixed-point condition `(Ax)_i = x·A·x` (by more
/// than [`REVIVE_MARGIN`] relative): toward a vertex that would gain mass,
/// or away from a supported vertex that would lose it. Either move raises
/// `x·A·x`; it puts back pruned vertices and shortcuts slow growth or decay.
/// Returns whether the state moved.
fn revive<F: Scalar>(a: &Matrix<F>, active: &mut Vec<usize>, x: &mut Vec<F>, local: &mut Option<Matrix<F>>) -> bool {
    let n = a.rows();
    let mut state = vec![F::zero(); n];
    for (&i, &v) in active.iter().zip(x.iter()) {
        state[i] = v;
    }
    let support: Vec<usize> = (0..n).filter(|&i| state[i] > F::zero()).collect();
    let row_payoff = |i: usize| {
        support
            .iter()
            .map(|&j| a.get(i, j) * state[j])
            .fold(F::zero(), |s, v| s + v)
    };
    let r: Vec<F> = (0..n).map(row_payoff).collect();
    let p = support.iter().map(|&i| state[i] * r[i]).fold(F::zero(), |s, v| s + v);
    let margin = p * F::of(REVIVE_MARGIN);
    let violation = |i: usize| {
        if r[i] - p > margin {
            r[i] - p
        } else if state[i] > F::zero() && p - r[i] > margin {
            p - r[i]
        } else {
            F::zero()
        }
    };
    let mut best = None;
    let mut worst = F::zero();
    for i in 0..n {
        let v = violation(i);
        if v > worst {
            worst = v;
            best = Some(i);
        }
    }
    let Some(i) = best else {
        return false;
    };
    let aii = a.get(i, i);
    // x(t) = ((1 - t)x + t e_i) toward i; x(t) = (x - t e_i)/(1 - t) away from it
    let toward = r[i] > p;
    let mut t = if toward {
        let curvature = F::of(2.0) * r[i] - p - aii;
        if curvature > F::zero() {
            ((r[i] - p) / curvature).min(F::one())
        } else {
            F::one()
        }
    } else if r[i] > aii {
        ((p - r[i]) / (r[i] - aii)).min(state[i])
    } else {
        state[i]
    };
    let mut trial = state.clone();
    let mut moved = false;
    for _ in 0..64 {
        if toward {
            trial.iter_mut().zip(&state).for_each(|(v, &s)| *v = (F::one() - t) * s);
            trial[i] += t;
        } else {
            trial.clone_from(&state);
            trial[i] = if t >= state[i] { F::zero() } else { state[i] - t };
            let s: F = trial.iter().copied().sum();
            trial.iter_mut().for_each(|v| *v /= s);
        }
        if payoff(a, &trial) >= p {
            moved = true;
            break;
        }
        t /= F::of(2.0);
    }
    if !moved {
        return false;
    }
    let keep: Vec<usize> = (0..n).filter(|&k| trial[k] > F::zero()).collect();
    let s: F = keep.iter().map(|&k| trial[k]).fold(F::zero(), |s, v| s + v);
    *x = keep.iter().map(|&k| trial[k] / s).collect();
    *local = if keep.len() == n {
        None
    } else {
        Some(a.submatrix(&keep))
    };
    *active = keep;
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DsParams {
    /// Peel-off stops once fewer than `max(min_cluster_size, 2)` vertices remain.
    pub min_cluster_size: usize,
    /// Optional cap on the number of extracted clusters; the rest is noise.
    pub max_clusters: Option<usize>,
}

impl Default for DsParams {
    fn default() -> Self {
        Self {
            min_cluster_size: 2,
            max_clusters: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsClustering {
    pub partition: Partition,
    /// Convergence flag of each extracted cluster, in extraction order.
    pub converged: Vec<bool>,
}

/// Repeatedly extracts a dominant set and removes it; vertices left when the
/// peel-off stops are noise.
pub fn dominant_set_clustering<F: Scalar>(a: &SimilarityMatrix<F>, params: DsParams) -> Result<DsClustering> {
    let n = a.len();
    let mut raw: Vec<Option<usize>> = vec![None; n];
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut converged = Vec::new();
    let stop_below = params.min_cluster_size.max(2);
    while remaining.len() >= stop_below && params.max_clusters.is_none_or(|m| converged.len() < m) {
        let sub = if remaining.len() == n {
            a.values.clone()
        } else {
            a.values.submatrix(&remaining)
        };
        let ds = match extract_dominant_set(&sub) {
            Ok(ds) => ds,
            Err(Error::ZeroPayoff) => break,
            Err(e) => return Err(e),
        };
        if ds.support.is_empty() {
            break;
        }
        if !ds.converged {
            log::debug!(
                "dominant set {} did not converge in {MAX_ITERATIONS} iterations",
                converged.len()
            );
        }
        let cluster = converged.len();
        for &s in &ds.support {
            raw[remaining[s]] = Some(cluster);
        }
        converged.push(ds.converged);
        let mut keep = vec![true; remaining.len()];
        ds.support.iter().for_each(|&s| keep[s] = false);
        remaining = remaining
            .into_iter()
            .zip(keep)
            .filter(|(_, k)| *k)
            .map(|(v, _)| v)
            .collect();
    }
    Ok(DsClustering {
        partition: Partition::from_raw(&raw),
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn mat(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn symmetric_pair_is_fixed_point() {
        let a = mat(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let s = replicator_step(&a, &[0.5, 0.5]).unwrap();
        assert_eq!(s.x, vec![0.5, 0.5]);
        assert_eq!(s.payoff, 0.5);
    }

    #[test]
    fn isolated_vertex_loses_mass() {
        let a = mat(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]]);
        let t = 1.0 / 3.0;
        let s = replicator_step(&a, &[t, t, t]).unwrap();
        for (v, e) in s.x.iter().zip([0.5, 0.5, 0.0]) {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_payoff_is_an_error() {
        let a = Matrix::<f64>::zeros(3, 3);
        assert!(matches!(replicator_step(&a, &[0.2, 0.3, 0.5]), Err(Error::ZeroPayoff)));
    }

    fn random_symmetric(n: usize, rng: &mut impl Rng) -> Matrix<f64> {
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = rng.random::<f64>();
                a.set(i, j, v);
                a.set(j, i, v);
            }
        }
        a
    }

    #[test]
    fn payoff_non_decreasing_over_steps() {
        let mut rng = seeded(3);
        for _ in 0..20 {
            let a = random_symmetric(5, &mut rng);
            let mut x: Vec<f64> = (0..5).map(|_| rng.random::<f64>() + 0.01).collect();
            let s: f64 = x.iter().sum();
            x.iter_mut().for_each(|v| *v /= s);
            let mut last = payoff(&a, &x);
            for _ in 0..100 {
                x = replicator_step(&a, &x).unwrap().x;
                assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let p = payoff(&a, &x);
                assert!(p >= last - 1e-12);
                last = p;
            }
        }
    }

    /// Brute-force local maxima of x·A·x on the simplex: a support S is a
    /// strict local maximizer's support when the equalizing vector on S is
    /// positive and no outside vertex has (Ax)_j >= payoff.
    fn brute_force_dominant_supports(a: &Matrix<f64>) -> Vec<Vec<usize>> {
        let n = a.rows();
        let mut out = Vec::new();
        for mask in 1u32..(1 << n) {
            let s: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            if s.len() < 2 {
                continue;
            }
            // uniform vector works for the regular blocks used below
            let x: Vec<f64> = (0..n)
                .map(|i| {
                    if mask & (1 << i) != 0 {
                        1.0 / s.len() as f64
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut ax = vec![0.0; n];
            a.matvec(&x, &mut ax);
            let p = dot(&x, &ax);
            let equal = s.iter().all(|&i| (ax[i] - p).abs() < 1e-12);
            let outside_lower = (0..n).filter(|i| mask & (1 << i) == 0).all(|j| ax[j] < p);
            if p > 0.0 && equal && outside_lower {
                out.push(s);
            }
        }
        out
    }

    #[test]
    fn clique_beats_weak_pair() {
        let mut a = Matrix::<f64>::zeros(5, 5);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    a.set(i, j, 1.0);
                }
            }
        }
        a.set(3, 4, 0.1);
        a.set(4, 3, 0.1);
        let oracle = brute_force_dominant_supports(&a);
        assert!(oracle.contains(&vec![0, 1, 2]));
        let ds = extract_dominant_set(&a).unwrap();
        assert!(ds.converged);
        assert_eq!(ds.support, vec![0, 1, 2]);
        for i in 0..3 {
            assert!((ds.x[i] - 1.0 / 3.0).abs() < 1e-7);
        }
    }

    #[test]
    fn single_vertex_is_its_own_set() {
        let a = Matrix::<f64>::zeros(1, 1);
        assert_eq!(extract_dominant_set(&a).unwrap().support, vec![0]);
    }

    #[test]
    fn equal_cliques_resolve_to_lowest_block() {
        let mut a = Matrix::<f64>::zeros(8, 8);
        for b in 0..2 {
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        a.set(4 * b + i, 4 * b + j, 1.0);
                    }
                }
            }
        }
        let ds = extract_dominant_set(&a).unwrap();
        assert_eq!(ds.support, vec![0, 1, 2, 3]);
    }

    fn planted(n_per: usize) -> SimilarityMatrix<f64> {
        let n = 2 * n_per;
        let m = Matrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else if (i < n_per) == (j < n_per) {
                0.9
            } else {
                0.05
            }
        });
        SimilarityMatrix::from_matrix(m).unwrap()
    }

    #[test]
    fn planted_blocks_recovered() {
        let out = dominant_set_clustering(&planted(20), DsParams::default()).unwrap();
        assert_eq!(out.partition.k(), 2);
        assert_eq!(out.partition.noise_count(), 0);
        let expect: Vec<usize> = (0..40).map(|i| (i >= 20) as usize).collect();
        assert_eq!(out.partition, Partition::from_labels(&expect));
        assert!(out.converged.iter().all(|&c| c));
    }

    #[test]
    fn degenerate_inputs_become_noise() {
        let one = SimilarityMatrix::from_matrix(Matrix::<f64>::zeros(1, 1)).unwrap();
        let p = dominant_set_clustering(&one, DsParams::default()).unwrap().partition;
        assert_eq!((p.k(), p.noise_count()), (0, 1));
        let zeros = SimilarityMatrix::from_matrix(Matrix::<f64>::zeros(6, 6)).unwrap();
        let p = dominant_set_clustering(&zeros, DsParams::default()).unwrap().partition;
        assert_eq!((p.k(), p.noise_count()), (0, 6));
    }

    #[test]
    fn cluster_cap_leaves_noise() {
        let params = DsParams {
            min_cluster_size: 2,
            max_clusters: Some(1),
        };
        let p = dominant_set_clustering(&planted(10), params).unwrap().partition;
        assert_eq!((p.k(), p.noise_count()), (1, 10));
    }

    #[test]
    fn works_in_single_precision() {
        let a = planted(6).values.map(|v| v as f32);
        let s = SimilarityMatrix::from_matrix(a).unwrap();
        let p = dominant_set_clustering(&s, DsParams::default()).unwrap().partition;
        assert_eq!(p.k(), 2);
    }
}
