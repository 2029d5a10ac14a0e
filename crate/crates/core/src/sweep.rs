//! Grid search over clustering parameters, scored by the silhouette
//! (internal criterion) and by ARI against class labels (external criterion).

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{dbscan, dominant_set_clustering, kmeans, kmedoids, DBSCANParams, DsParams, KParams};
use crate::dataio::csv::{fmt_float, CsvBuf};
use crate::dataio::{gaussian_similarity, DistanceMatrix, LabelVector, Matrix, Partition};
use crate::error::{Error, Result};
use crate::indices::{adjusted_mutual_information, adjusted_rand_index, purity, silhouette};
use crate::rng::derive_seed;
use crate::scalar::Scalar;

/// Smallest class size of the reference stimulus set.
pub const MIN_CLASS_SIZE: usize = 69;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    DominantSet,
    Dbscan,
    KMeans,
    KMedoids,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Self::DominantSet, Self::Dbscan, Self::KMeans, Self::KMedoids];

    pub fn name(self) -> &'static str {
        match self {
            Self::DominantSet => "DS",
            Self::Dbscan => "DBSCAN",
            Self::KMeans => "kmeans",
            Self::KMedoids => "kmedoids",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown algorithm '{s}'")))
    }
}

/// One parameter setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridPoint {
    Ds { sigma: f64 },
    Dbscan { eps: f64, min_pts: usize },
    KMeans { k: usize },
    KMedoids { k: usize },
}

impl GridPoint {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Self::Ds { .. } => Algorithm::DominantSet,
            Self::Dbscan { .. } => Algorithm::Dbscan,
            Self::KMeans { .. } => Algorithm::KMeans,
            Self::KMedoids { .. } => Algorithm::KMedoids,
        }
    }
}

/// `;`-separated `key=value` pairs, suitable for a CSV cell.
impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ds { sigma } => write!(f, "sigma={}", fmt_float(*sigma)),
            Self::Dbscan { eps, min_pts } => write!(f, "eps={};min_pts={min_pts}", fmt_float(*eps)),
            Self::KMeans { k } | Self::KMedoids { k } => write!(f, "k={k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub algorithm: Algorithm,
    pub points: Vec<GridPoint>,
    pub seed: u64,
    /// Peel-off stopping size for DS.
    pub ds_min_cluster_size: usize,
    pub ds_max_clusters: Option<usize>,
    pub k_restarts: usize,
    pub k_max_iter: usize,
}

impl SweepGrid {
    pub fn new(algorithm: Algorithm, points: Vec<GridPoint>, seed: u64) -> Result<Self> {
        let g = Self {
            algorithm,
            points,
            seed,
            ds_min_cluster_size: MIN_CLASS_SIZE,
            ds_max_clusters: None,
            k_restarts: 10,
            k_max_iter: 300,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidParameter(format!("empty {} grid", self.algorithm)));
        }
        for p in &self.points {
            if p.algorithm() != self.algorithm {
                return Err(Error::InvalidParameter(format!(
                    "{p} does not belong to a {} grid",
                    self.algorithm
                )));
            }
            let ok = match *p {
                GridPoint::Ds { sigma } => sigma > 0.0 && sigma.is_finite(),
                GridPoint::Dbscan { eps, min_pts } => eps > 0.0 && min_pts >= 1,
                GridPoint::KMeans { k } | GridPoint::KMedoids { k } => k >= 1,
            };
            if !ok {
                return Err(Error::InvalidParameter(format!("invalid grid point {p}")));
            }
        }
        if self.k_restarts == 0 || self.k_max_iter == 0 {
            return Err(Error::InvalidParameter(
                "k_restarts and k_max_iter must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Nearest-rank percentile (`q` in percent) of the pairwise distances.
pub fn distance_percentile<F: Scalar>(d: &DistanceMatrix<F>, q: f64) -> f64 {
    let mut v: Vec<f64> = d.upper_triangle().iter().map(|x| x.as_f64()).collect();
    v.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

/// Settings that shape the default grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub sigma_count: usize,
    pub sigma_lo_factor: f64,
    pub sigma_hi_factor: f64,
    pub eps_percentiles: Vec<f64>,
    pub min_pts: Vec<usize>,
    pub k_values: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            sigma_count: 21,
            sigma_lo_factor: 0.1,
            sigma_hi_factor: 10.0,
            eps_percentiles: vec![1.0, 2.0, 5.0, 10.0, 20.0, 30.0],
            min_pts: vec![2, 4, 8],
            k_values: (2..=10).collect(),
        }
    }
}

impl GridSpec {
    /// Concrete grid points for `algorithm`, scaled to the distances in `d`.
    pub fn points<F: Scalar>(&self, algorithm: Algorithm, d: &DistanceMatrix<F>) -> Vec<GridPoint> {
        match algorithm {
            Algorithm::DominantSet => {
                let med = d.median().as_f64();
                log_space(self.sigma_lo_factor * med, self.sigma_hi_factor * med, self.sigma_count)
                    .into_iter()
                    .map(|sigma| GridPoint::Ds { sigma })
                    .collect()
            }
            Algorithm::Dbscan => {
                let mut out = Vec::new();
                for &q in &self.eps_percentiles {
                    let eps = distance_percentile(d, q);
                    for &min_pts in &self.min_pts {
                        out.push(GridPoint::Dbscan { eps, min_pts });
                    }
                }
                out
            }
            Algorithm::KMeans => self.k_values.iter().map(|&k| GridPoint::KMeans { k }).collect(),
            Algorithm::KMedoids => self.k_values.iter().map(|&k| GridPoint::KMedoids { k }).collect(),
        }
    }
}

/// Inputs shared by every grid point.
#[derive(Debug, Clone, Copy)]
pub struct SweepData<'a, F: Scalar> {
    pub matrix: &'a Matrix<F>,
    pub distances: &'a DistanceMatrix<F>,
}

/// Runs one setting. Returns the partition and whether every iterative step
/// converged.
pub fn run_point<F: Scalar>(data: SweepData<'_, F>, grid: &SweepGrid, index: usize) -> Result<(Partition, bool)> {
    let seed = derive_seed(grid.seed, index as u64);
    match grid.points[index] {
        GridPoint::Ds { sigma } => {
            let a = gaussian_similarity(data.distances, F::of(sigma))?;
            let params = DsParams {
                min_cluster_size: grid.ds_min_cluster_size,
                max_clusters: grid.ds_max_clusters,
            };
            let out = dominant_set_clustering(&a, params)?;
            Ok((out.partition, out.converged.iter().all(|&c| c)))
        }
        GridPoint::Dbscan { eps, min_pts } => {
            let p = DBSCANParams::new(F::of(eps), min_pts)?;
            Ok((dbscan(data.distances, p), true))
        }
        GridPoint::KMeans { k } => {
            let p = KParams::new(k, grid.k_restarts, grid.k_max_iter)?;
            let out = kmeans(data.matrix, p, seed)?;
            Ok((out.partition, out.best.converged))
        }
        GridPoint::KMedoids { k } => {
            let p = KParams::new(k, grid.k_restarts, grid.k_max_iter)?;
            Ok((kmedoids(data.distances, p, seed)?.partition, true))
        }
    }
}

/// Partitions and silhouettes of every grid point, in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRun {
    pub grid: SweepGrid,
    pub partitions: Vec<Partition>,
    pub sil: Vec<Option<f64>>,
    pub converged: Vec<bool>,
}

pub fn run_grid<F: Scalar>(data: SweepData<'_, F>, grid: &SweepGrid) -> Result<GridRun> {
    grid.validate()?;
    let results: Vec<Result<(Partition, Option<f64>, bool)>> = (0..grid.points.len())
        .into_par_iter()
        .map(|i| {
            let (p, conv) = run_point(data, grid, i)?;
            let sil = match silhouette(data.distances, &p) {
                Ok(s) => Some(s.sil),
                Err(Error::UndefinedIndex(_)) => None,
                Err(e) => return Err(e),
            };
            Ok((p, sil, conv))
        })
        .collect();
    let mut run = GridRun {
        grid: grid.clone(),
        partitions: Vec::new(),
        sil: Vec::new(),
        converged: Vec::new(),
    };
    for r in results {
        let (p, s, c) = r?;
        run.partitions.push(p);
        run.sil.push(s);
        run.converged.push(c);
    }
    Ok(run)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExternalScores {
    pub ari: f64,
    pub ami: f64,
    pub purity: f64,
}

pub fn external_scores(run: &GridRun, labels: &LabelVector) -> Result<Vec<ExternalScores>> {
    run.partitions
        .par_iter()
        .map(|p| {
            Ok(ExternalScores {
                ari: adjusted_rand_index(p, labels)?,
                ami: adjusted_mutual_information(p, labels)?,
                purity: purity(p, labels)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub params: GridPoint,
    pub k: usize,
    pub noise: usize,
    pub sil: Option<f64>,
    pub external: Option<ExternalScores>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub algorithm: Algorithm,
    pub rows: Vec<SweepRow>,
    pub winner: Option<usize>,
    /// Internal sweeps only: the restricted admissibility rule decided the winner.
    pub fallback_used: bool,
    pub diagnostic: Option<String>,
}

impl SweepResult {
    pub fn winning_row(&self) -> Option<&SweepRow> {
        self.winner.map(|w| &self.rows[w])
    }
}

fn first_max(candidates: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in candidates {
        if v.is_finite() && best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

fn big_clusters(p: &Partition, min_size: usize) -> usize {
    p.cluster_sizes().iter().filter(|&&s| s >= min_size).count()
}

/// Picks the SIL winner among partitions with at least two clusters. When
/// that winner does not have two clusters of at least `min_class_size`
/// members, the choice is repeated among partitions that do; if none does,
/// there is no winner.
pub fn internal_winner(run: &GridRun, min_class_size: usize) -> (Option<usize>, bool, Option<String>) {
    let sil_of = |i: usize| run.sil[i].filter(|_| run.partitions[i].k() >= 2);
    let global = first_max((0..run.sil.len()).filter_map(|i| sil_of(i).map(|s| (i, s))));
    match global {
        Some(w) if big_clusters(&run.partitions[w], min_class_size) >= 2 => (Some(w), false, None),
        _ => {
            let restricted = first_max(
                (0..run.sil.len())
                    .filter(|&i| big_clusters(&run.partitions[i], min_class_size) >= 2)
                    .filter_map(|i| sil_of(i).map(|s| (i, s))),
            );
            let diag = match (global, restricted) {
                (_, Some(_)) => None,
                (None, None) => Some(format!(
                    "no {} setting produced two or more clusters",
                    run.grid.algorithm
                )),
                (Some(_), None) => Some(format!(
                    "no {} setting produced two clusters of at least {min_class_size} members",
                    run.grid.algorithm
                )),
            };
            (restricted, true, diag)
        }
    }
}

pub fn external_winner(scores: &[ExternalScores]) -> Option<usize> {
    first_max(scores.iter().map(|s| s.ari).enumerate())
}

fn rows(run: &GridRun, external: Option<&[ExternalScores]>) -> Vec<SweepRow> {
    (0..run.partitions.len())
        .map(|i| SweepRow {
            params: run.grid.points[i],
            k: run.partitions[i].k(),
            noise: run.partitions[i].noise_count(),
            sil: run.sil[i],
            external: external.map(|e| e[i]),
            converged: run.converged[i],
        })
        .collect()
}

pub fn internal_sweep<F: Scalar>(
    data: SweepData<'_, F>,
    grid: &SweepGrid,
    min_class_size: usize,
) -> Result<SweepResult> {
    let run = run_grid(data, grid)?;
    Ok(internal_result(&run, min_class_size))
}

pub fn internal_result(run: &GridRun, min_class_size: usize) -> SweepResult {
    let (winner, fallback_used, diagnostic) = internal_winner(run, min_class_size);
    SweepResult {
        algorithm: run.grid.algorithm,
        rows: rows(run, None),
        winner,
        fallback_used,
        diagnostic,
    }
}

pub fn external_sweep<F: Scalar>(
    data: SweepData<'_, F>,
    grid: &SweepGrid,
    labels: &LabelVector,
) -> Result<SweepResult> {
    let run = run_grid(data, grid)?;
    external_result(&run, labels)
}

pub fn external_result(run: &GridRun, labels: &LabelVector) -> Result<SweepResult> {
    let scores = external_scores(run, labels)?;
    let winner = external_winner(&scores);
    Ok(SweepResult {
        algorithm: run.grid.algorithm,
        rows: rows(run, Some(&scores)),
        winner,
        fallback_used: false,
        diagnostic: winner.is_none().then(|| "no grid point has a finite ARI".to_string()),
    })
}

pub const SWEEP_HEADER: [&str; 10] = [
    "algorithm",
    "params",
    "k",
    "noise",
    "sil",
    "ari",
    "ami",
    "purity",
    "winner_internal",
    "winner_external",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_float)
}

/// Appends one CSV row per grid point. `internal` and `external` must come
/// from the same grid run.
pub fn append_rows(out: &mut CsvBuf, internal: &SweepResult, external: &SweepResult) {
    for (i, (r, e)) in internal.rows.iter().zip(&external.rows).enumerate() {
        let ext = e.external;
        out.row([
            internal.algorithm.name().to_string(),
            r.params.to_string(),
            r.k.to_string(),
            r.noise.to_string(),
            opt(r.sil),
            opt(ext.map(|x| x.ari)),
            opt(ext.map(|x| x.ami)),
            opt(ext.map(|x| x.purity)),
            u8::from(internal.winner == Some(i)).to_string(),
            u8::from(external.winner == Some(i)).to_string(),
        ]);
    }
}
