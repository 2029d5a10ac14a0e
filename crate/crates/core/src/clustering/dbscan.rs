//! Density-based clustering over a precomputed distance matrix.

use std::collections::VecDeque;

use crate::dataio::{DistanceMatrix, Partition};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DBSCANParams<F> {
    pub eps: F,
    pub min_pts: usize,
}

impl<F: Scalar> DBSCANParams<F> {
    pub fn new(eps: F, min_pts: usize) -> Result<Self> {
        if !(eps > F::zero()) || min_pts == 0 {
            return Err(Error::InvalidParameter(format!(
                "DBSCAN needs eps > 0 and min_pts >= 1, got eps={eps} min_pts={min_pts}"
            )));
        }
        Ok(Self { eps, min_pts })
    }
}

/// Indices within `eps` of `i`, including `i` itself, ascending.
fn neighbors<F: Scalar>(d: &DistanceMatrix<F>, i: usize, eps: F) -> Vec<usize> {
    d.values
        .row(i)
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= eps)
        .map(|(j, _)| j)
        .collect()
}

/// Points are visited in index order; a border point joins the first cluster
/// that reaches it.
pub fn dbscan<F: Scalar>(d: &DistanceMatrix<F>, p: DBSCANParams<F>) -> Partition {
    let n = d.len();
    let hoods: Vec<Vec<usize>> = (0..n).map(|i| neighbors(d, i, p.eps)).collect();
    let core: Vec<bool> = hoods.iter().map(|h| h.len() >= p.min_pts).collect();
    let mut raw: Vec<Option<usize>> = vec![None; n];
    let mut k = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if !core[start] || raw[start].is_some() {
            continue;
        }
        raw[start] = Some(k);
        queue.push_back(start);
        while let Some(q) = queue.pop_front() {
            for &j in &hoods[q] {
                if raw[j].is_none() {
                    raw[j] = Some(k);
                    if core[j] {
                        queue.push_back(j);
                    }
                }
            }
        }
        k += 1;
    }
    Partition::from_raw(&raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{euclidean_distances, Matrix};

    fn line(xs: &[f64]) -> DistanceMatrix<f64> {
        let m = Matrix::from_vec(xs.len(), 1, xs.to_vec()).unwrap();
        euclidean_distances(&m).unwrap()
    }

    #[test]
    fn two_runs_on_a_line() {
        let d = line(&[0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
        let p = dbscan(&d, DBSCANParams::new(1.5, 2).unwrap());
        assert_eq!(p, Partition::from_labels(&[0, 0, 0, 1, 1, 1]));
    }

    #[test]
    fn tiny_eps_gives_all_noise() {
        let d = line(&[0.0, 1.0, 2.0, 10.0]);
        let p = dbscan(&d, DBSCANParams::new(0.5, 2).unwrap());
        assert_eq!(p, Partition::all_noise(4));
    }

    #[test]
    fn min_pts_one_makes_everyone_core() {
        let d = line(&[0.0, 5.0, 10.0]);
        let p = dbscan(&d, DBSCANParams::new(0.5, 1).unwrap());
        assert_eq!(p.k(), 3);
    }

    #[test]
    fn border_goes_to_first_cluster() {
        // 1.0 is within eps of both groups but is not core itself
        let d = line(&[0.0, 0.1, 0.2, 1.0, 1.8, 1.9, 2.0]);
        let p = dbscan(&d, DBSCANParams::new(0.85, 4).unwrap());
        assert_eq!(p, Partition::from_labels(&[0, 0, 0, 0, 1, 1, 1]));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(DBSCANParams::new(0.0, 2).is_err());
        assert!(DBSCANParams::new(1.0, 0).is_err());
    }
}
