//! Dense-network building blocks: fully-connected layers, ELU, inverted
//! dropout, batch normalization with running statistics, and the stable
//! scalar nonlinearities used by the loss.
//!
//! Everything operates on f64 batches (rows = samples) so analytic
//! gradients can be validated against central finite differences.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Variance floor inside batch-norm denominators.
pub(crate) const BN_EPS: f64 = 1e-5;
/// Weight of the previous running statistic in the batch-norm update.
pub(crate) const BN_MOMENTUM: f64 = 0.9;

/// Fully-connected layer; `w` is out_dim × in_dim, applied as x·wᵀ + b.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    /// Fan-in-scaled uniform initialization: entries from ±(1/in_dim)^½,
    /// biases zero, so initial preactivations stay near zero.
    pub fn init(out_dim: usize, in_dim: usize, rng: &mut ChaCha8Rng) -> Dense {
        let limit = (1.0 / in_dim as f64).sqrt();
        Dense {
            w: Array2::from_shape_fn((out_dim, in_dim), |_| rng.random_range(-limit..limit)),
            b: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    /// x: B × in → B × out.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    /// Accumulates weight/bias gradients for upstream gradient `dy`
    /// (B × out) at input `x`, returning the gradient on x.
    pub fn backward(
        &self,
        x: &Array2<f64>,
        dy: &Array2<f64>,
        dw: &mut Array2<f64>,
        db: &mut Array1<f64>,
    ) -> Array2<f64> {
        *dw += &dy.t().dot(x);
        *db += &dy.sum_axis(Axis(0));
        dy.dot(&self.w)
    }
}

/// ELU with unit scale: x for x > 0, eˣ − 1 otherwise (C¹ at zero).
pub(crate) fn elu_forward(pre: &Array2<f64>) -> Array2<f64> {
    pre.mapv(|v| if v > 0.0 { v } else { v.exp() - 1.0 })
}

/// ELU derivative evaluated from the cached preactivation.
pub(crate) fn elu_grad(pre: &Array2<f64>) -> Array2<f64> {
    pre.mapv(|v| if v > 0.0 { 1.0 } else { v.exp() })
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable ln(1 + eᵛ).
pub(crate) fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

/// Inverted-dropout mask: kept units are scaled by 1/(1−rate) so the
/// expected activation is unchanged and evaluation needs no rescaling.
pub(crate) fn dropout_mask(dim: (usize, usize), rate: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let keep = 1.0 - rate;
    Array2::from_shape_fn(dim, |_| {
        if rng.random::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    })
}

/// Per-feature batch normalization with learned scale/shift and running
/// statistics for evaluation mode.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

/// Quantities cached by the training-mode forward pass for the backward.
pub(crate) struct BnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl BatchNorm {
    pub fn new(dim: usize) -> BatchNorm {
        BatchNorm {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
        }
    }

    /// Normalizes with batch statistics and folds them into the running
    /// estimates.
    pub fn forward_train(&mut self, x: &Array2<f64>) -> (Array2<f64>, BnCache) {
        let mean = x.mean_axis(Axis(0)).expect("non-empty batch");
        let centered = x - &mean;
        let var = centered
            .mapv(|v| v * v)
            .mean_axis(Axis(0))
            .expect("non-empty batch");
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let xhat = &centered * &inv_std;
        let y = &xhat * &self.gamma + &self.beta;
        self.running_mean = BN_MOMENTUM * &self.running_mean + (1.0 - BN_MOMENTUM) * &mean;
        self.running_var = BN_MOMENTUM * &self.running_var + (1.0 - BN_MOMENTUM) * &var;
        (y, BnCache { xhat, inv_std })
    }

    /// Evaluation mode: normalizes with the running statistics.
    pub fn forward_eval(&self, x: &Array2<f64>) -> Array2<f64> {
        let inv_std = self.running_var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let y = (x - &self.running_mean) * &inv_std;
        y * &self.gamma + &self.beta
    }

    /// Backward through the batch-statistics normalization; accumulates
    /// gamma/beta gradients and returns the gradient on the input.
    pub fn backward(
        &self,
        cache: &BnCache,
        g: &Array2<f64>,
        dgamma: &mut Array1<f64>,
        dbeta: &mut Array1<f64>,
    ) -> Array2<f64> {
        let n = g.nrows() as f64;
        *dgamma += &(g * &cache.xhat).sum_axis(Axis(0));
        *dbeta += &g.sum_axis(Axis(0));
        let dxhat = g * &self.gamma;
        let sum_dxhat = dxhat.sum_axis(Axis(0));
        let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
        // standard fused form covering the mean and variance paths
        let mut dx = dxhat * n;
        dx -= &sum_dxhat;
        dx -= &(&cache.xhat * &sum_dxhat_xhat);
        dx * &cache.inv_std / n
    }
}

/// One-hot encodes selected alignment rows into a B × (L·q) batch.
pub(crate) fn one_hot_rows(
    data: &ndarray::ArrayView2<u8>,
    rows: &[usize],
    q: usize,
) -> Array2<f64> {
    let l = data.ncols();
    let mut x = Array2::zeros((rows.len(), l * q));
    for (bi, &r) in rows.iter().enumerate() {
        for (i, &c) in data.row(r).iter().enumerate() {
            x[(bi, i * q + c as usize)] = 1.0;
        }
    }
    x
}

/// One-hot encodes a single sequence as a 1 × (L·q) batch.
pub(crate) fn one_hot_seq(seq: &[u8], q: usize) -> Array2<f64> {
    let mut x = Array2::zeros((1, seq.len() * q));
    for (i, &c) in seq.iter().enumerate() {
        x[(0, i * q + c as usize)] = 1.0;
    }
    x
}
