//! Cluster validity indices.
//!
//! External indices (ARI, AMI, purity) treat every noise point as its own
//! singleton cluster. The silhouette ignores noise points entirely.

use serde::{Deserialize, Serialize};

use crate::dataio::{DistanceMatrix, LabelVector, Partition};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Silhouette {
    /// `None` for noise points.
    pub per_point: Vec<Option<f64>>,
    /// Mean over non-noise points.
    pub sil: f64,
}

pub fn silhouette<F: Scalar>(d: &DistanceMatrix<F>, p: &Partition) -> Result<Silhouette> {
    let n = d.len();
    if p.len() != n {
        return Err(Error::Shape(format!("partition has {} points, distances {n}", p.len())));
    }
    let k = p.k();
    if k < 2 {
        return Err(Error::UndefinedIndex(format!(
            "silhouette needs at least 2 clusters, got {k}"
        )));
    }
    let sizes = p.cluster_sizes();
    let assign = p.assignment();
    let mut per_point = vec![None; n];
    let mut sums = vec![0.0f64; k];
    let mut total = 0.0;
    let mut scored = 0usize;
    for i in 0..n {
        let Some(own) = assign[i] else { continue };
        sums.iter_mut().for_each(|s| *s = 0.0);
        let row = d.values.row(i);
        for (j, c) in assign.iter().enumerate() {
            if let Some(c) = c {
                sums[*c] += row[j].as_f64();
            }
        }
        let s = if sizes[own] == 1 {
            0.0
        } else {
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        };
        per_point[i] = Some(s);
        total += s;
        scored += 1;
    }
    Ok(Silhouette {
        per_point,
        sil: total / scored as f64,
    })
}

/// Dense contingency table between two labelings of equal length.
struct Contingency {
    n: usize,
    table: Vec<Vec<usize>>,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl Contingency {
    fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Shape(format!(
                "labelings differ in length: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        let ra = a.iter().max().map_or(0, |m| m + 1);
        let cb = b.iter().max().map_or(0, |m| m + 1);
        let mut table = vec![vec![0usize; cb]; ra];
        for (&x, &y) in a.iter().zip(b) {
            table[x][y] += 1;
        }
        // drop empty rows and columns
        let rows_keep: Vec<usize> = (0..ra).filter(|&r| table[r].iter().any(|&v| v > 0)).collect();
        let cols_keep: Vec<usize> = (0..cb).filter(|&c| table.iter().any(|row| row[c] > 0)).collect();
        let table: Vec<Vec<usize>> = rows_keep
            .iter()
            .map(|&r| cols_keep.iter().map(|&c| table[r][c]).collect())
            .collect();
        let rows = table.iter().map(|r| r.iter().sum()).collect();
        let cols = (0..cols_keep.len()).map(|c| table.iter().map(|r| r[c]).sum()).collect();
        Ok(Self {
            n: a.len(),
            table,
            rows,
            cols,
        })
    }
}

fn same_grouping(a: &[usize], b: &[usize]) -> bool {
    Partition::from_labels(a) == Partition::from_labels(b)
}

fn comb2(v: usize) -> f64 {
    (v as f64) * (v as f64 - 1.0) / 2.0
}

/// Pair-counting ARI between two dense labelings.
pub fn ari_labels(a: &[usize], b: &[usize]) -> Result<f64> {
    let c = Contingency::new(a, b)?;
    let index: f64 = c.table.iter().flatten().map(|&v| comb2(v)).sum();
    let sa: f64 = c.rows.iter().map(|&v| comb2(v)).sum();
    let sb: f64 = c.cols.iter().map(|&v| comb2(v)).sum();
    let expected = sa * sb / comb2(c.n).max(1.0);
    let max = (sa + sb) / 2.0;
    if max == expected {
        return Ok(if same_grouping(a, b) { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `ln k!` for `k = 0..=n`.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

fn mutual_information(c: &Contingency) -> f64 {
    let n = c.n as f64;
    let mut mi = 0.0;
    for (i, row) in c.table.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > 0 {
                let v = v as f64;
                mi += v / n * (n * v / (c.rows[i] as f64 * c.cols[j] as f64)).ln();
            }
        }
    }
    mi
}

/// Expected mutual information under the hypergeometric model of random
/// labelings with fixed marginals.
fn expected_mutual_information(c: &Contingency) -> f64 {
    let n = c.n;
    let lf = log_factorials(n);
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in &c.rows {
        for &b in &c.cols {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            let fixed = lf[a] + lf[b] + lf[n - a] + lf[n - b] - lf[n];
            for nij in lo..=hi {
                let v = nij as f64;
                let term = v / nf * (nf * v / (a as f64 * b as f64)).ln();
                let logp = fixed - lf[nij] - lf[a - nij] - lf[b - nij] - lf[n + nij - a - b];
                emi += term * logp.exp();
            }
        }
    }
    emi
}

/// AMI with arithmetic-mean normalisation and exact expected MI.
pub fn ami_labels(a: &[usize], b: &[usize]) -> Result<f64> {
    let c = Contingency::new(a, b)?;
    let hu = entropy(&c.rows, c.n);
    let hv = entropy(&c.cols, c.n);
    let identical = same_grouping(a, b);
    if hu == 0.0 && hv == 0.0 {
        return Ok(if identical { 1.0 } else { 0.0 });
    }
    let mi = mutual_information(&c);
    let emi = expected_mutual_information(&c);
    let denom = 0.5 * (hu + hv) - emi;
    if denom.abs() < 1e-15 {
        return Ok(if identical { 1.0 } else { 0.0 });
    }
    Ok((mi - emi) / denom)
}

/// Fraction of points belonging to the majority class of their cluster.
pub fn purity_labels(clusters: &[usize], classes: &[usize]) -> Result<f64> {
    let c = Contingency::new(clusters, classes)?;
    if c.n == 0 {
        return Err(Error::UndefinedIndex("purity of an empty labeling".into()));
    }
    let hits: usize = c.table.iter().map(|r| r.iter().copied().max().unwrap_or(0)).sum();
    Ok(hits as f64 / c.n as f64)
}

fn check_len(p: &Partition, labels: &LabelVector) -> Result<()> {
    if p.len() != labels.len() {
        return Err(Error::Shape(format!(
            "partition has {} points, labels {}",
            p.len(),
            labels.len()
        )));
    }
    Ok(())
}

pub fn adjusted_rand_index(p: &Partition, labels: &LabelVector) -> Result<f64> {
    check_len(p, labels)?;
    ari_labels(&p.with_noise_as_singletons(), &labels.labels)
}

pub fn adjusted_mutual_information(p: &Partition, labels: &LabelVector) -> Result<f64> {
    check_len(p, labels)?;
    ami_labels(&p.with_noise_as_singletons(), &labels.labels)
}

pub fn purity(p: &Partition, labels: &LabelVector) -> Result<f64> {
    check_len(p, labels)?;
    purity_labels(&p.with_noise_as_singletons(), &labels.labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    /// `None` when fewer than two clusters exist.
    pub sil: Option<f64>,
    pub ari: f64,
    pub ami: f64,
    pub purity: f64,
    pub k: usize,
}

impl IndexReport {
    pub fn compute<F: Scalar>(d: &DistanceMatrix<F>, p: &Partition, labels: &LabelVector) -> Result<Self> {
        let sil = match silhouette(d, p) {
            Ok(s) => Some(s.sil),
            Err(Error::UndefinedIndex(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            sil,
            ari: adjusted_rand_index(p, labels)?,
            ami: adjusted_mutual_information(p, labels)?,
            purity: purity(p, labels)?,
            k: p.k(),
        })
    }
}
