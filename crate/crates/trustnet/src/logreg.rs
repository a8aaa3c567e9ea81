//! Binary logistic regression on dense features.
//!
//! One implementation serves both the topological sign classifier and the
//! downstream edge evaluator. Training minimizes the mean regularized
//! negative log-likelihood with Nesterov-accelerated gradient descent plus
//! Armijo backtracking; everything is deterministic (zero init, no shuffling),
//! so refits are bit-identical.

use crate::scalar::{sigmoid, Scalar};
use crate::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug)]
pub struct DenseMatrix<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> DenseMatrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> DenseMatrix<S> {
        DenseMatrix { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<S>]) -> DenseMatrix<S> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        DenseMatrix { rows: rows.len(), cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Per-feature affine normalization fit on training data. Constant features
/// (zero standard deviation) are zeroed out rather than divided.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer<S> {
    pub mean: Vec<S>,
    pub std: Vec<S>,
}

impl<S: Scalar> Standardizer<S> {
    /// Population mean/std per column.
    pub fn fit(x: &DenseMatrix<S>) -> Standardizer<S> {
        let m = S::lit(x.rows.max(1) as f64);
        let mut mean = vec![S::zero(); x.cols];
        for r in 0..x.rows {
            for (acc, &v) in mean.iter_mut().zip(x.row(r)) {
                *acc += v;
            }
        }
        for v in mean.iter_mut() {
            *v /= m;
        }
        let mut var = vec![S::zero(); x.cols];
        for r in 0..x.rows {
            for ((acc, &mu), &v) in var.iter_mut().zip(&mean).zip(x.row(r)) {
                let d = v - mu;
                *acc += d * d;
            }
        }
        let std = var.into_iter().map(|v| (v / m).sqrt()).collect();
        Standardizer { mean, std }
    }

    #[inline]
    pub fn apply(&self, raw: &[S], out: &mut [S]) {
        for i in 0..raw.len() {
            out[i] = if self.std[i] > S::zero() {
                (raw[i] - self.mean[i]) / self.std[i]
            } else {
                S::zero()
            };
        }
    }

    pub fn transform(&self, x: &DenseMatrix<S>) -> DenseMatrix<S> {
        let mut out = DenseMatrix::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let mut buf = vec![S::zero(); x.cols];
            self.apply(x.row(r), &mut buf);
            out.row_mut(r).copy_from_slice(&buf);
        }
        out
    }
}

/// Optimizer settings. `l2` penalizes coefficients (not the bias); training
/// stops when the loss improves by less than `tol` or `max_iters` is reached.
/// `balanced` reweights samples inversely to class frequency so each class
/// carries equal total mass — the standard treatment when one sign dominates.
#[derive(Clone, Copy, Debug)]
pub struct LogRegConfig {
    pub l2: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub balanced: bool,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig { l2: 1e-4, tol: 1e-6, max_iters: 1000, balanced: false }
    }
}

/// Trained model: bias, coefficients, and the scaler its inputs expect.
#[derive(Clone, Debug)]
pub struct LogReg<S> {
    pub bias: S,
    pub coef: Vec<S>,
    pub scaler: Standardizer<S>,
}

impl<S: Scalar> LogReg<S> {
    /// P(label = 1) for a raw (unstandardized) feature vector.
    pub fn predict_proba(&self, raw: &[S]) -> S {
        let mut buf = vec![S::zero(); raw.len()];
        self.scaler.apply(raw, &mut buf);
        let mut z = self.bias;
        for (w, v) in self.coef.iter().zip(&buf) {
            z += *w * *v;
        }
        sigmoid(z)
    }

    /// Fraction of rows whose thresholded prediction matches the label.
    pub fn accuracy(&self, x: &DenseMatrix<S>, y: &[bool]) -> f64 {
        let half = S::lit(0.5);
        let hits = (0..x.rows)
            .filter(|&r| (self.predict_proba(x.row(r)) >= half) == y[r])
            .count();
        hits as f64 / x.rows.max(1) as f64
    }
}

/// Mean regularized NLL and its gradient at `theta = [bias, coefs..]` over
/// already-standardized features. Exposed for finite-difference verification.
pub fn nll_grad<S: Scalar>(
    x_std: &DenseMatrix<S>,
    y: &[bool],
    theta: &[S],
    l2: f64,
) -> (S, Vec<S>) {
    nll_grad_weighted(x_std, y, None, theta, l2)
}

/// [`nll_grad`] with optional per-sample weights; the data term is the
/// weighted mean `Σ w_i ℓ_i / Σ w_i`.
pub fn nll_grad_weighted<S: Scalar>(
    x_std: &DenseMatrix<S>,
    y: &[bool],
    weights: Option<&[S]>,
    theta: &[S],
    l2: f64,
) -> (S, Vec<S>) {
    assert_eq!(theta.len(), x_std.cols + 1);
    assert_eq!(y.len(), x_std.rows);
    if let Some(w) = weights {
        assert_eq!(w.len(), x_std.rows);
    }
    let m = match weights {
        Some(w) => w.iter().fold(S::zero(), |a, &v| a + v),
        None => S::lit(x_std.rows as f64),
    };
    let lam = S::lit(l2);
    let mut loss = S::zero();
    let mut grad = vec![S::zero(); theta.len()];
    for r in 0..x_std.rows {
        let row = x_std.row(r);
        let mut z = theta[0];
        for (w, v) in theta[1..].iter().zip(row) {
            z += *w * *v;
        }
        // -log p(y|z), numerically stable in both tails
        let yv = if y[r] { S::one() } else { S::zero() };
        let soft = if z > S::zero() { z + (S::one() + (-z).exp()).ln() } else { (S::one() + z.exp()).ln() };
        let wr = weights.map_or(S::one(), |w| w[r]);
        loss += wr * (soft - yv * z);
        let err = wr * (sigmoid(z) - yv);
        grad[0] += err;
        for (g, v) in grad[1..].iter_mut().zip(row) {
            *g += err * *v;
        }
    }
    loss /= m;
    for g in grad.iter_mut() {
        *g /= m;
    }
    // ridge on coefficients only
    let mut sq = S::zero();
    for (g, w) in grad[1..].iter_mut().zip(&theta[1..]) {
        *g += lam * *w;
        sq += *w * *w;
    }
    loss += lam * sq / S::lit(2.0);
    (loss, grad)
}

/// Fits on raw features: standardizes, then runs accelerated GD from zero.
pub fn fit<S: Scalar>(
    x_raw: &DenseMatrix<S>,
    y: &[bool],
    cfg: &LogRegConfig,
) -> Result<LogReg<S>> {
    if x_raw.rows == 0 {
        return Err(Error::Training("empty training set".into()));
    }
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::Training("single-class training set".into()));
    }
    let weights: Option<Vec<S>> = if cfg.balanced {
        let pos = y.iter().filter(|&&v| v).count();
        let neg = y.len() - pos;
        let wp = y.len() as f64 / (2.0 * pos as f64);
        let wn = y.len() as f64 / (2.0 * neg as f64);
        Some(y.iter().map(|&v| S::lit(if v { wp } else { wn })).collect())
    } else {
        None
    };
    let w = weights.as_deref();
    let scaler = Standardizer::fit(x_raw);
    let x = scaler.transform(x_raw);
    let dim = x.cols + 1;
    let mut theta = vec![S::zero(); dim];
    let mut prev = theta.clone();
    let (mut loss, _) = nll_grad_weighted(&x, y, w, &theta, cfg.l2);
    let mut step = S::one();
    for k in 1..=cfg.max_iters {
        // Nesterov lookahead with restart on non-descent
        let mom = S::lit((k as f64 - 1.0) / (k as f64 + 2.0));
        let mut probe = vec![S::zero(); dim];
        for i in 0..dim {
            probe[i] = theta[i] + mom * (theta[i] - prev[i]);
        }
        let (probe_loss, grad) = nll_grad_weighted(&x, y, w, &probe, cfg.l2);
        let gnorm2 = grad.iter().fold(S::zero(), |a, &g| a + g * g);
        // Armijo backtracking from the lookahead point
        let mut cand = vec![S::zero(); dim];
        let mut cand_loss;
        loop {
            for i in 0..dim {
                cand[i] = probe[i] - step * grad[i];
            }
            cand_loss = nll_grad_weighted(&x, y, w, &cand, cfg.l2).0;
            if cand_loss <= probe_loss - S::lit(1e-4) * step * gnorm2 || step < S::lit(1e-12) {
                break;
            }
            step *= S::lit(0.5);
        }
        if cand_loss > loss {
            // momentum overshot: restart from the best known point
            let (_, g0) = nll_grad_weighted(&x, y, w, &theta, cfg.l2);
            for i in 0..dim {
                cand[i] = theta[i] - step * g0[i];
            }
            cand_loss = nll_grad_weighted(&x, y, w, &cand, cfg.l2).0;
        }
        prev = std::mem::take(&mut theta);
        theta = cand;
        let improved = (loss - cand_loss).to_f64();
        loss = cand_loss;
        step = (step * S::lit(2.0)).min(S::lit(1e6));
        if improved.abs() < cfg.tol {
            break;
        }
    }
    if !loss.is_finite() {
        return Err(Error::Training("diverged: non-finite loss".into()));
    }
    Ok(LogReg { bias: theta[0], coef: theta[1..].to_vec(), scaler })
}
