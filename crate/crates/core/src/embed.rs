//! Exact t-SNE and SVG scatter plots of the resulting 2-D maps.

use std::fmt::Write as _;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::csv::{fmt_float, write_file, CsvBuf};
use crate::dataio::{DistanceMatrix, LabelVector, Matrix, Partition};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::scalar::Scalar;

pub const ENTROPY_TOLERANCE: f64 = 1e-5;
pub const MAX_BISECTION_STEPS: usize = 50;
const INIT_STD: f64 = 1e-4;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding2D<F> {
    /// `n × 2`, centered at the origin.
    pub coords: Matrix<F>,
    pub final_kl: f64,
    /// `(iteration, KL)` against the unexaggerated P, every 50 iterations
    /// and at the end.
    pub kl_history: Vec<(usize, f64)>,
}

/// Row-conditional affinities `p_{j|i}` with per-row Gaussian precision
/// found by bisection on the entropy. Returns the matrix and each row's
/// entropy in nats.
pub fn conditional_affinities<F: Scalar>(d: &DistanceMatrix<F>, perplexity: f64) -> Result<(Matrix<F>, Vec<f64>)> {
    let order: Vec<usize> = (0..d.len()).collect();
    conditional_affinities_ordered(d, perplexity, &order)
}

/// Sums run over points in `order`, which makes the result exactly
/// equivariant under relabelling when `order` is relabelled alongside.
fn conditional_affinities_ordered<F: Scalar>(
    d: &DistanceMatrix<F>,
    perplexity: f64,
    order: &[usize],
) -> Result<(Matrix<F>, Vec<f64>)> {
    let n = d.len();
    check_perplexity(n, perplexity)?;
    let target = perplexity.ln();
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d2: Vec<f64> = (0..n).map(|j| d.get(i, j).as_f64().powi(2)).collect();
            let dmin = (0..n).filter(|&j| j != i).map(|j| d2[j]).fold(f64::INFINITY, f64::min);
            let eval = |beta: f64| {
                let mut p = vec![0.0; n];
                let mut sum = 0.0;
                let mut wsum = 0.0;
                for &j in order.iter().filter(|&&j| j != i) {
                    let s = d2[j] - dmin;
                    p[j] = (-beta * s).exp();
                    sum += p[j];
                    wsum += p[j] * s;
                }
                let h = sum.ln() + beta * wsum / sum;
                p.iter_mut().for_each(|v| *v /= sum);
                (p, h)
            };
            let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
            let (mut p, mut h) = eval(beta);
            for _ in 0..MAX_BISECTION_STEPS {
                if (h - target).abs() < ENTROPY_TOLERANCE {
                    break;
                }
                if h > target {
                    lo = beta;
                    beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
                } else {
                    hi = beta;
                    beta = (beta + lo) / 2.0;
                }
                (p, h) = eval(beta);
            }
            (p, h)
        })
        .collect();
    let mut m = Matrix::zeros(n, n);
    let mut entropies = Vec::with_capacity(n);
    for (i, (p, h)) in rows.into_iter().enumerate() {
        for (j, v) in p.into_iter().enumerate() {
            m.set(i, j, F::of(v));
        }
        entropies.push(h);
    }
    Ok((m, entropies))
}

/// `(P + Pᵀ) / 2n`, summing to one.
pub fn joint_affinities<F: Scalar>(cond: &Matrix<F>) -> Matrix<F> {
    let n = cond.rows();
    let scale = F::of_usize(2 * n);
    Matrix::from_fn(n, n, |i, j| (cond.get(i, j) + cond.get(j, i)) / scale)
}

/// Student-t affinities `q_ij` of the map `y` (zero diagonal, sums to one).
pub fn student_t_affinities<F: Scalar>(y: &Matrix<F>) -> Matrix<F> {
    let order: Vec<usize> = (0..y.rows()).collect();
    let (num, z) = kernel_numerators(y, &order);
    num.map(|v| v / z)
}

fn kernel_numerators<F: Scalar>(y: &Matrix<F>, order: &[usize]) -> (Matrix<F>, F) {
    let n = y.rows();
    let rows: Vec<Vec<F>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        F::zero()
                    } else {
                        let dx = y.get(i, 0) - y.get(j, 0);
                        let dy = y.get(i, 1) - y.get(j, 1);
                        F::one() / (F::one() + dx * dx + dy * dy)
                    }
                })
                .collect()
        })
        .collect();
    let z = order
        .iter()
        .map(|&i| order.iter().map(|&j| rows[i][j]).sum::<F>())
        .sum();
    let data = rows.into_iter().flatten().collect();
    (Matrix::from_vec(n, n, data).expect("square"), z)
}

/// KL(P‖Q) of the map `y` and its gradient with respect to `y`.
pub fn kl_and_gradient<F: Scalar>(p: &Matrix<F>, y: &Matrix<F>) -> (f64, Matrix<F>) {
    let order: Vec<usize> = (0..y.rows()).collect();
    kl_and_gradient_ordered(p, y, &order)
}

fn kl_and_gradient_ordered<F: Scalar>(p: &Matrix<F>, y: &Matrix<F>, order: &[usize]) -> (f64, Matrix<F>) {
    let n = y.rows();
    let (num, z) = kernel_numerators(y, order);
    let four = F::of(4.0);
    let grads: Vec<([F; 2], f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut g = [F::zero(); 2];
            let mut kl = 0.0;
            for &j in order {
                if i == j {
                    continue;
                }
                let q = num.get(i, j) / z;
                let pij = p.get(i, j);
                let w = (pij - q) * num.get(i, j);
                g[0] += w * (y.get(i, 0) - y.get(j, 0));
                g[1] += w * (y.get(i, 1) - y.get(j, 1));
                if pij > F::zero() {
                    let (pf, qf) = (pij.as_f64(), q.as_f64().max(f64::MIN_POSITIVE));
                    kl += pf * (pf / qf).ln();
                }
            }
            ([g[0] * four, g[1] * four], kl)
        })
        .collect();
    let kl = order.iter().map(|&i| grads[i].1).sum();
    let data = grads.into_iter().flat_map(|(g, _)| g).collect();
    (kl, Matrix::from_vec(n, 2, data).expect("n x 2"))
}

fn check_perplexity(n: usize, perplexity: f64) -> Result<()> {
    if n < 4 {
        return Err(Error::InvalidParameter(format!(
            "t-SNE needs at least 4 points, got {n}"
        )));
    }
    if !(perplexity > 0.0) || perplexity >= (n as f64 - 1.0) / 3.0 {
        return Err(Error::PerplexityTooLarge { perplexity, n });
    }
    Ok(())
}

pub fn tsne<F: Scalar>(d: &DistanceMatrix<F>, cfg: &TsneConfig) -> Result<Embedding2D<F>> {
    let keys: Vec<u64> = (0..d.len() as u64).collect();
    tsne_with_keys(d, cfg, &keys)
}

/// As [`tsne`], with point `i` initialised from stream `keys[i]`. All sums
/// visit points in key order, so permuting the inputs together with their
/// keys permutes the output exactly.
pub fn tsne_with_keys<F: Scalar>(d: &DistanceMatrix<F>, cfg: &TsneConfig, keys: &[u64]) -> Result<Embedding2D<F>> {
    let n = d.len();
    check_perplexity(n, cfg.perplexity)?;
    if keys.len() != n {
        return Err(Error::Shape(format!("{} keys for {n} points", keys.len())));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (keys[i], i));
    let (cond, _) = conditional_affinities_ordered(d, cfg.perplexity, &order)?;
    let p = joint_affinities(&cond);
    let p_exag = p.map(|v| v * F::of(cfg.early_exaggeration));

    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut y = Matrix::zeros(n, 2);
    for (i, &key) in keys.iter().enumerate() {
        let mut rng = stream_rng(cfg.seed, key);
        y.set(i, 0, F::of(normal.sample(&mut rng)));
        y.set(i, 1, F::of(normal.sample(&mut rng)));
    }
    let mut update = Matrix::<F>::zeros(n, 2);
    let mut gains = Matrix::from_fn(n, 2, |_, _| F::one());
    let lr = F::of(cfg.learning_rate);
    let mut kl_history = Vec::new();
    for it in 0..cfg.iterations {
        let exaggerated = it < cfg.exaggeration_iterations;
        let (kl, grad) = kl_and_gradient_ordered(if exaggerated { &p_exag } else { &p }, &y, &order);
        if it % 50 == 0 {
            let kl = if exaggerated {
                kl_and_gradient_ordered(&p, &y, &order).0
            } else {
                kl
            };
            kl_history.push((it, kl));
        }
        let momentum = F::of(if it < cfg.momentum_switch {
            cfg.initial_momentum
        } else {
            cfg.final_momentum
        });
        for i in 0..n {
            for c in 0..2 {
                let g = grad.get(i, c);
                let u = update.get(i, c);
                let gain = if (g > F::zero()) != (u > F::zero()) {
                    gains.get(i, c) + F::of(0.2)
                } else {
                    (gains.get(i, c) * F::of(0.8)).max(F::of(MIN_GAIN))
                };
                gains.set(i, c, gain);
                let u = momentum * u - lr * gain * g;
                update.set(i, c, u);
                y.set(i, c, y.get(i, c) + u);
            }
        }
        center(&mut y, &order);
    }
    let (final_kl, _) = kl_and_gradient_ordered(&p, &y, &order);
    kl_history.push((cfg.iterations, final_kl));
    if !y.as_slice().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { row: 0, col: 0 });
    }
    Ok(Embedding2D {
        coords: y,
        final_kl: final_kl.max(0.0),
        kl_history,
    })
}

fn center<F: Scalar>(y: &mut Matrix<F>, order: &[usize]) {
    let n = F::of_usize(y.rows());
    for c in 0..2 {
        let mean = order.iter().map(|&i| y.get(i, c)).sum::<F>() / n;
        for i in 0..y.rows() {
            y.set(i, c, y.get(i, c) - mean);
        }
    }
}

pub fn write_embedding<F: Scalar>(
    path: &Path,
    ids: &[String],
    e: &Embedding2D<F>,
    comment: Option<&str>,
) -> Result<()> {
    let mut out = CsvBuf::new(comment, &["stimulus_id", "x", "y"]);
    for (i, id) in ids.iter().enumerate() {
        out.row([
            id.clone(),
            fmt_float(e.coords.get(i, 0).as_f64()),
            fmt_float(e.coords.get(i, 1).as_f64()),
        ]);
    }
    out.write(path)
}

/// What to color points by.
#[derive(Debug, Clone, Copy)]
pub enum Coloring<'a> {
    Labels(&'a LabelVector),
    Partition(&'a Partition),
}

impl Coloring<'_> {
    fn len(&self) -> usize {
        match self {
            Self::Labels(l) => l.len(),
            Self::Partition(p) => p.len(),
        }
    }

    fn group(&self, i: usize) -> Option<usize> {
        match self {
            Self::Labels(l) => Some(l.labels[i]),
            Self::Partition(p) => p.assignment()[i],
        }
    }

    fn groups(&self) -> usize {
        match self {
            Self::Labels(l) => l.n_classes,
            Self::Partition(p) => p.k(),
        }
    }

    fn has_noise(&self) -> bool {
        matches!(self, Self::Partition(p) if p.noise_count() > 0)
    }

    fn legend(&self, g: usize) -> String {
        match self {
            Self::Labels(_) => format!("class {g}"),
            Self::Partition(_) => format!("cluster {g}"),
        }
    }
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#393b79",
];
const NOISE_COLOR: &str = "#999999";

/// Scatter plot of the embedding: one circle per point colored by group,
/// noise as gray crosses, and a legend. The plot area is fitted to the data
/// with a 5% margin on every side.
pub fn scatter_svg<F: Scalar>(e: &Embedding2D<F>, colors: Coloring<'_>, title: &str) -> Result<String> {
    let n = e.coords.rows();
    if colors.len() != n {
        return Err(Error::Shape(format!("{} colors for {n} points", colors.len())));
    }
    let (plot, legend_w) = (600.0, 160.0);
    let xs: Vec<f64> = (0..n).map(|i| e.coords.get(i, 0).as_f64()).collect();
    let ys: Vec<f64> = (0..n).map(|i| e.coords.get(i, 1).as_f64()).collect();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(1e-12);
        (lo - 0.05 * span, 1.1 * span)
    };
    let (x0, xw) = range(&xs);
    let (y0, yh) = range(&ys);
    let px = |x: f64| (x - x0) / xw * plot;
    let py = |y: f64| plot - (y - y0) / yh * plot;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = plot + legend_w,
        h = plot + 30.0
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="10" y="{}" font-family="sans-serif" font-size="14">{}</text>"#,
        plot + 22.0,
        escape(title)
    );
    for i in 0..n {
        let (cx, cy) = (px(xs[i]), py(ys[i]));
        match colors.group(i) {
            Some(g) => {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2.5" fill="{}" fill-opacity="0.8"/>"#,
                    PALETTE[g % PALETTE.len()]
                );
            }
            None => {
                let _ = writeln!(
                    s,
                    r#"<path d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke="{NOISE_COLOR}" stroke-width="1"/>"#,
                    cx - 2.5,
                    cy - 2.5,
                    cx + 2.5,
                    cy + 2.5,
                    cx - 2.5,
                    cy + 2.5,
                    cx + 2.5,
                    cy - 2.5
                );
            }
        }
    }
    let mut row = 0;
    let lx = plot + 15.0;
    for g in 0..colors.groups() {
        let ly = 20.0 + 18.0 * row as f64;
        let _ = writeln!(
            s,
            r#"<g class="legend"><circle cx="{lx}" cy="{ly}" r="5" fill="{}"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text></g>"#,
            PALETTE[g % PALETTE.len()],
            lx + 10.0,
            ly + 4.0,
            colors.legend(g)
        );
        row += 1;
    }
    if colors.has_noise() {
        let ly = 20.0 + 18.0 * row as f64;
        let _ = writeln!(
            s,
            r#"<g class="legend"><path d="M{a} {b}L{c} {d}M{a} {d}L{c} {b}" stroke="{NOISE_COLOR}"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">noise</text></g>"#,
            lx + 10.0,
            ly + 4.0,
            a = lx - 4.0,
            b = ly - 4.0,
            c = lx + 4.0,
            d = ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_scatter_svg<F: Scalar>(path: &Path, e: &Embedding2D<F>, colors: Coloring<'_>, title: &str) -> Result<()> {
    write_file(path, scatter_svg(e, colors, title)?.as_bytes())
}
