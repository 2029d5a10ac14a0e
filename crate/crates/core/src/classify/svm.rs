//! Soft-margin binary SVM trained by sequential minimal optimization on a
//! precomputed kernel matrix.

use serde::{Deserialize, Serialize};

use crate::dataio::{dot, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const KKT_TOLERANCE: f64 = 1e-3;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

/// Inner products and squared distances between all samples, from which
/// kernel blocks for any subset are cut.
#[derive(Debug, Clone)]
pub struct KernelSource<F: Scalar> {
    gram: Matrix<F>,
    sqdist: Matrix<F>,
}

impl<F: Scalar> KernelSource<F> {
    pub fn new(x: &Matrix<F>) -> Self {
        let n = x.rows();
        let mut gram = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = dot(x.row(i), x.row(j));
                gram.set(i, j, v);
                gram.set(j, i, v);
            }
        }
        let sqdist = Matrix::from_fn(n, n, |i, j| {
            if i == j {
                F::zero()
            } else {
                (gram.get(i, i) + gram.get(j, j) - F::of(2.0) * gram.get(i, j)).max(F::zero())
            }
        });
        Self { gram, sqdist }
    }

    pub fn len(&self) -> usize {
        self.gram.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, kernel: Kernel, i: usize, j: usize) -> F {
        match kernel {
            Kernel::Linear => self.gram.get(i, j),
            Kernel::Rbf { gamma } => (-F::of(gamma) * self.sqdist.get(i, j)).exp(),
        }
    }

    pub fn block(&self, kernel: Kernel, rows: &[usize], cols: &[usize]) -> Matrix<F> {
        Matrix::from_fn(rows.len(), cols.len(), |a, b| self.value(kernel, rows[a], cols[b]))
    }

    pub fn sqdist(&self, i: usize, j: usize) -> F {
        self.sqdist.get(i, j)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm<F> {
    /// Dual variables, one per training sample.
    pub alpha: Vec<F>,
    pub y: Vec<f64>,
    pub b: F,
    pub c: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final maximal KKT violation `m(α) − M(α)`.
    pub kkt_gap: f64,
}

impl<F: Scalar> BinarySvm<F> {
    /// `f(x) = Σ α_i y_i K(x_i, x) + b`, given `k(i) = K(x_i, x)`.
    pub fn decision(&self, k: impl Fn(usize) -> F) -> F {
        let mut s = self.b;
        for (i, &a) in self.alpha.iter().enumerate() {
            if a > F::zero() {
                s += a * F::of(self.y[i]) * k(i);
            }
        }
        s
    }

    /// Dual objective `Σα − ½ ΣΣ α_i α_j y_i y_j K_ij` (to be maximized).
    pub fn dual_objective(&self, k: &Matrix<F>) -> f64 {
        let n = self.alpha.len();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += self.alpha[i].as_f64() * self.alpha[j].as_f64() * self.y[i] * self.y[j] * k.get(i, j).as_f64();
            }
        }
        self.alpha.iter().map(|a| a.as_f64()).sum::<f64>() - 0.5 * quad
    }

    /// Largest violation of `0 ≤ α ≤ C` and of `|Σ α_i y_i|`.
    pub fn feasibility_error(&self) -> f64 {
        let boxed = self
            .alpha
            .iter()
            .map(|a| (-a.as_f64()).max(a.as_f64() - self.c).max(0.0))
            .fold(0.0, f64::max);
        let eq: f64 = self.alpha.iter().zip(&self.y).map(|(a, y)| a.as_f64() * y).sum();
        boxed.max(eq.abs())
    }

    pub fn support_count(&self) -> usize {
        self.alpha.iter().filter(|&&a| a > F::zero()).count()
    }
}

/// Trains on kernel matrix `k` with labels `y ∈ {−1, +1}`. Working pairs are
/// the maximal violator plus a second-order partner; the loop stops once the
/// KKT gap falls below `1e-3` or after `100·n` updates. Variables stuck at a
/// bound are periodically set aside and restored before the final check.
pub fn train_svm<F: Scalar>(k: &Matrix<F>, y: &[f64], c: f64) -> Result<BinarySvm<F>> {
    let n = y.len();
    if k.rows() != n || k.cols() != n {
        return Err(Error::Shape(format!("kernel is {}x{}, labels {n}", k.rows(), k.cols())));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("C must be positive, got {c}")));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidParameter("SVM labels must be -1 or +1".into()));
    }
    if n < 2 || !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(Error::InvalidParameter("SVM training needs both classes".into()));
    }
    let mut s = Smo::new(k, y, c);
    let max_iter = 100 * n;
    let shrink_every = n.min(1000);
    let mut countdown = shrink_every;
    let mut iterations = 0;
    let mut gap;
    loop {
        countdown -= 1;
        if countdown == 0 {
            countdown = shrink_every;
            s.shrink();
        }
        let (mut i, mut j, g) = s.select();
        gap = g;
        let stalled = i == usize::MAX || j == usize::MAX || gap < KKT_TOLERANCE;
        if stalled && s.active.len() < n {
            s.restore();
            (i, j, gap) = s.select();
            countdown = 1;
        }
        if i == usize::MAX || j == usize::MAX || gap < KKT_TOLERANCE || iterations >= max_iter {
            break;
        }
        iterations += 1;
        s.update(i, j);
    }
    if s.active.len() < n {
        s.restore();
        gap = s.select().2;
    }
    let rho = s.offset();
    let converged = gap < KKT_TOLERANCE;
    if !converged {
        log::debug!("SMO stopped after {iterations} updates with KKT gap {gap:.3e}");
    }
    Ok(BinarySvm {
        alpha: s.alpha,
        y: y.to_vec(),
        b: -rho,
        c,
        iterations,
        converged,
        kkt_gap: gap,
    })
}

struct Smo<'a, F> {
    k: &'a Matrix<F>,
    diag: Vec<F>,
    yf: Vec<F>,
    c: F,
    alpha: Vec<F>,
    /// `−y_t ∇_t` of `½ αᵀQα − Σα` for members of the set whose `α` may
    /// move up along `y`, `−∞` elsewhere; kept current on the active set only.
    up: Vec<F>,
    /// The same values for the down set, `+∞` elsewhere.
    low: Vec<F>,
    active: Vec<usize>,
    unshrunk: bool,
    /// First maximizer of `up` over the active set, when known.
    top: Option<(usize, F)>,
}

impl<'a, F: Scalar> Smo<'a, F> {
    fn new(k: &'a Matrix<F>, y: &[f64], c: f64) -> Self {
        let n = y.len();
        let yf: Vec<F> = y.iter().map(|&v| F::of(v)).collect();
        let mut s = Self {
            k,
            diag: (0..n).map(|t| k.get(t, t)).collect(),
            up: yf.clone(),
            low: yf.clone(),
            yf,
            c: F::of(c),
            alpha: vec![F::zero(); n],
            active: (0..n).collect(),
            unshrunk: false,
            top: None,
        };
        for t in 0..n {
            let v = s.yf[t];
            s.set_value(t, v);
        }
        s
    }

    fn pos(&self, t: usize) -> bool {
        self.yf[t] > F::zero()
    }

    fn in_up(&self, t: usize) -> bool {
        self.up[t] > F::neg_infinity()
    }

    fn in_low(&self, t: usize) -> bool {
        self.low[t] < F::infinity()
    }

    fn value(&self, t: usize) -> F {
        if self.in_up(t) {
            self.up[t]
        } else {
            self.low[t]
        }
    }

    /// Stores `v` as the value of `t`, masked by the current set memberships.
    fn set_value(&mut self, t: usize, v: F) {
        let (above, below) = (self.alpha[t] > F::zero(), self.alpha[t] < self.c);
        let (up, low) = if self.pos(t) { (below, above) } else { (above, below) };
        self.up[t] = if up { v } else { F::neg_infinity() };
        self.low[t] = if low { v } else { F::infinity() };
    }

    /// `(m, M)`: largest violation value over the up set and smallest over the low set.
    fn extremes(&self) -> (F, F) {
        let (mut m, mut big_m) = (F::neg_infinity(), F::infinity());
        for &t in &self.active {
            m = m.max(self.up[t]);
            big_m = big_m.min(self.low[t]);
        }
        (m, big_m)
    }

    /// Maximal violator `i`, its second-order partner `j`, and the KKT gap.
    fn select(&self) -> (usize, usize, f64) {
        if self.active.len() == self.up.len() {
            self.select_over(0..self.up.len())
        } else {
            self.select_over(self.active.iter().copied())
        }
    }

    fn select_over(&self, idx: impl Iterator<Item = usize> + Clone) -> (usize, usize, f64) {
        let tau = F::of(TAU);
        let (i, gmax) = self.top.unwrap_or_else(|| self.argmax_up(idx.clone()));
        let mut gmin = F::infinity();
        let mut j = usize::MAX;
        // best partner maximizes b²/a, compared as fractions
        let (mut best_b2, mut best_a) = (F::zero(), F::one());
        let (ri, kii) = match i {
            usize::MAX => (&[][..], F::zero()),
            _ => (self.k.row(i), self.diag[i]),
        };
        for t in idx {
            let v = self.low[t];
            gmin = gmin.min(v);
            let b = gmax - v;
            if b > F::zero() {
                let mut a = kii + self.diag[t] - F::of(2.0) * ri[t];
                if a <= F::zero() {
                    a = tau;
                }
                let b2 = b * b;
                if b2 * best_a > best_b2 * a {
                    (best_b2, best_a) = (b2, a);
                    j = t;
                }
            }
        }
        (i, j, (gmax - gmin).as_f64())
    }

    fn argmax_up(&self, idx: impl Iterator<Item = usize>) -> (usize, F) {
        let mut best = (usize::MAX, F::neg_infinity());
        for t in idx {
            if self.up[t] > best.1 {
                best = (t, self.up[t]);
            }
        }
        best
    }

    fn update(&mut self, i: usize, j: usize) {
        let (vi, vj) = (self.value(i), self.value(j));
        let (k, cf, alpha) = (self.k, self.c, &mut self.alpha);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (gi, gj) = (-self.yf[i] * vi, -self.yf[j] * vj);
        let mut quad = self.diag[i] + self.diag[j] - F::of(2.0) * k.get(i, j);
        if quad <= F::zero() {
            quad = F::of(TAU);
        }
        if self.yf[i] != self.yf[j] {
            let delta = (-gi - gj) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > F::zero() {
                if alpha[j] < F::zero() {
                    alpha[j] = F::zero();
                    alpha[i] = diff;
                }
            } else if alpha[i] < F::zero() {
                alpha[i] = F::zero();
                alpha[j] = -diff;
            }
            if diff > F::zero() {
                if alpha[i] > cf {
                    alpha[i] = cf;
                    alpha[j] = cf - diff;
                }
            } else if alpha[j] > cf {
                alpha[j] = cf;
                alpha[i] = cf + diff;
            }
        } else {
            let delta = (gi - gj) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > cf {
                if alpha[i] > cf {
                    alpha[i] = cf;
                    alpha[j] = sum - cf;
                }
            } else if alpha[j] < F::zero() {
                alpha[j] = F::zero();
                alpha[i] = sum;
            }
            if sum > cf {
                if alpha[j] > cf {
                    alpha[j] = cf;
                    alpha[i] = sum - cf;
                }
            } else if alpha[i] < F::zero() {
                alpha[i] = F::zero();
                alpha[j] = sum;
            }
        }
        let si = self.yf[i] * (alpha[i] - old_i);
        let sj = self.yf[j] * (alpha[j] - old_j);
        let (ri, rj) = (k.row(i), k.row(j));
        let (vi, vj) = (vi - (si * ri[i] + sj * rj[i]), vj - (si * ri[j] + sj * rj[j]));
        let mut top = (usize::MAX, F::neg_infinity());
        if self.active.len() == self.up.len() {
            for (t, (((u, l), &a), &b)) in self.up.iter_mut().zip(self.low.iter_mut()).zip(ri).zip(rj).enumerate() {
                let d = si * a + sj * b;
                *u -= d;
                *l -= d;
                if *u > top.1 {
                    top = (t, *u);
                }
            }
        } else {
            for &t in &self.active {
                let d = si * ri[t] + sj * rj[t];
                self.up[t] -= d;
                self.low[t] -= d;
                if self.up[t] > top.1 {
                    top = (t, self.up[t]);
                }
            }
        }
        self.set_value(i, vi);
        self.set_value(j, vj);
        // a changed membership of i or j may move the maximizer
        let stale = [i, j].iter().any(|&v| {
            if v == top.0 {
                self.up[v] != top.1
            } else {
                self.up[v] >= top.1
            }
        });
        self.top = if stale { None } else { Some(top) };
    }

    /// Sets aside bounded variables that cannot join a violating pair.
    fn shrink(&mut self) {
        self.top = None;
        let (m, big_m) = self.extremes();
        if !self.unshrunk && (m - big_m).as_f64() <= 10.0 * KKT_TOLERANCE {
            self.unshrunk = true;
            self.restore();
        }
        let keep: Vec<usize> = self
            .active
            .iter()
            .copied()
            .filter(|&t| {
                let v = self.value(t);
                match (self.in_up(t), self.in_low(t)) {
                    (true, false) => v >= big_m,
                    (false, true) => v <= m,
                    _ => true,
                }
            })
            .collect();
        self.active = keep;
    }

    /// Recomputes the violation values of the set-aside variables and
    /// reactivates them.
    fn restore(&mut self) {
        let n = self.alpha.len();
        if self.active.len() == n {
            return;
        }
        let mut is_active = vec![false; n];
        for &t in &self.active {
            is_active[t] = true;
        }
        let support: Vec<usize> = (0..n).filter(|&t| self.alpha[t] > F::zero()).collect();
        for t in (0..n).filter(|&t| !is_active[t]) {
            let row = self.k.row(t);
            let mut g = F::zero();
            for &f in &support {
                g += self.alpha[f] * self.yf[f] * row[f];
            }
            let v = self.yf[t] - g;
            self.set_value(t, v);
        }
        self.active = (0..n).collect();
        self.top = None;
    }

    /// `ρ` from the free vectors, or the middle of the feasible interval.
    fn offset(&self) -> F {
        let (mut ub, mut lb) = (F::infinity(), F::neg_infinity());
        let (mut free, mut sum_free) = (0usize, F::zero());
        for t in 0..self.alpha.len() {
            let yg = -self.value(t);
            if self.alpha[t] >= self.c {
                if self.pos(t) {
                    lb = lb.max(yg);
                } else {
                    ub = ub.min(yg);
                }
            } else if self.alpha[t] <= F::zero() {
                if self.pos(t) {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum_free += yg;
            }
        }
        if free > 0 {
            sum_free / F::of_usize(free)
        } else {
            (ub + lb) / F::of(2.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(xs: &[[f64; 2]]) -> Matrix<f64> {
        Matrix::from_rows(&xs.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn train(x: &Matrix<f64>, y: &[f64], kernel: Kernel, c: f64) -> (BinarySvm<f64>, KernelSource<f64>) {
        let src = KernelSource::new(x);
        let idx: Vec<usize> = (0..x.rows()).collect();
        let k = src.block(kernel, &idx, &idx);
        (train_svm(&k, y, c).unwrap(), src)
    }

    fn train_acc(m: &BinarySvm<f64>, src: &KernelSource<f64>, kernel: Kernel, y: &[f64]) -> f64 {
        let hits = (0..y.len())
            .filter(|&q| {
                let f = m.decision(|i| src.value(kernel, i, q));
                (f >= 0.0) == (y[q] > 0.0)
            })
            .count();
        hits as f64 / y.len() as f64
    }

    #[test]
    fn symmetric_pair_boundary_at_origin() {
        let x = Matrix::from_vec(2, 1, vec![-1.0, 1.0]).unwrap();
        let y = [-1.0, 1.0];
        let src = KernelSource::new(&x);
        let k = src.block(Kernel::Linear, &[0, 1], &[0, 1]);
        let m: BinarySvm<f64> = train_svm(&k, &y, 1e3).unwrap();
        assert!(m.converged);
        assert!(m.b.abs() < 1e-9);
        assert!((m.alpha[0] - 0.5).abs() < 1e-9);
        assert!(m.decision(|i| -x.get(i, 0)) < 0.0);
        assert!(m.decision(|i| x.get(i, 0)) > 0.0);
        assert!(m.feasibility_error() < 1e-8);
        assert!(m.dual_objective(&k) >= 0.0);
    }

    #[test]
    fn kkt_holds_on_every_variable_with_noisy_labels() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 300;
        let x = Matrix::from_fn(n, 5, |_, _| rng.random::<f64>());
        let y: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        for (kernel, c) in [(Kernel::Linear, 10.0), (Kernel::Rbf { gamma: 2.0 }, 100.0)] {
            let (m, src) = train(&x, &y, kernel, c);
            assert!(m.converged && m.feasibility_error() < 1e-8);
            let (mut up, mut low) = (f64::NEG_INFINITY, f64::INFINITY);
            for t in 0..n {
                let g: f64 = (0..n)
                    .map(|s| m.alpha[s] * y[s] * y[t] * src.value(kernel, s, t))
                    .sum::<f64>()
                    - 1.0;
                let v = -y[t] * g;
                let (pos, a) = (y[t] > 0.0, m.alpha[t]);
                if (pos && a < c) || (!pos && a > 0.0) {
                    up = up.max(v);
                }
                if (pos && a > 0.0) || (!pos && a < c) {
                    low = low.min(v);
                }
            }
            assert!(up - low < KKT_TOLERANCE * 1.01, "gap {}", up - low);
            assert!((up - low - m.kkt_gap).abs() < 1e-9);
        }
    }

    #[test]
    fn xor_needs_a_nonlinear_kernel() {
        let x = points(&[[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]);
        let y = [1.0, 1.0, -1.0, -1.0];
        let (lin, src) = train(&x, &y, Kernel::Linear, 10.0);
        assert!(train_acc(&lin, &src, Kernel::Linear, &y) <= 0.75);
        let rbf_kernel = Kernel::Rbf { gamma: 1.0 };
        let (rbf, src) = train(&x, &y, rbf_kernel, 10.0);
        assert_eq!(train_acc(&rbf, &src, rbf_kernel, &y), 1.0);
        assert!(rbf.converged && rbf.feasibility_error() < 1e-8);
    }

    #[test]
    fn rejects_single_class() {
        let k = Matrix::<f64>::zeros(2, 2);
        assert!(train_svm(&k, &[1.0, 1.0], 1.0).is_err());
        assert!(train_svm(&k, &[1.0, -1.0], 0.0).is_err());
    }

    #[test]
    fn kernel_source_matches_direct_formula() {
        let x = points(&[[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]]);
        let src = KernelSource::new(&x);
        let d2 = (2.0f64).powi(2) + (2.0f64).powi(2);
        assert!((src.sqdist(0, 1) - d2).abs() < 1e-12);
        assert!((src.value(Kernel::Rbf { gamma: 0.5 }, 0, 1) - (-0.5 * d2).exp()).abs() < 1e-12);
        assert_eq!(src.value(Kernel::Linear, 1, 2), 0.5);
    }
}
