//! Reparameterized training of the autoencoder.
//!
//! The per-sample loss is the Bernoulli cross-entropy summed over all L·q
//! output units (no scaling prefactor) plus the analytic KL divergence
//! from the posterior to the standard-normal prior, averaged over the
//! batch. Gradients are hand-derived and checked against central finite
//! differences in the test suite.

use super::layers::{dropout_mask, elu_forward, elu_grad, one_hot_rows, sigmoid, softplus};
use super::{init_with_alphabet, VaeArch, VaeParams};
use crate::error::{Error, Result};
use crate::msa::Msa;
use crate::rng::{derive_seed, stream_rng};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Optimizer and schedule settings; epochs are fixed (no early stopping)
/// so models trained with equal configs are directly comparable.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction of sequences held out for validation-loss tracking.
    pub validation_fraction: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 32,
            batch_size: 200,
            validation_fraction: 0.10,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Rejects out-of-range settings before any compute starts.
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "epochs and batch_size must be >= 1".into(),
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidArgument(
                "validation fraction must lie in (0, 1)".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(
                "learning rate must be positive and finite".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument(
                "Adam betas must lie in [0, 1)".into(),
            ));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(
                "Adam epsilon must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Losses logged after each epoch (evaluation mode, one latent draw per
/// sequence).
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Result of [`train_vae`]: trained weights plus the loss history.
#[derive(Debug, Clone)]
pub struct VaeTraining {
    pub params: VaeParams,
    pub history: Vec<EpochLoss>,
}

impl VaeTraining {
    /// History as CSV with header `epoch,train_loss,val_loss`.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for e in &self.history {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_loss));
        }
        out
    }
}

/// Gradients mirroring the trainable tensors of [`VaeParams`].
pub(crate) struct VaeGrads {
    enc: Vec<(Array2<f64>, Array1<f64>)>,
    bn: Option<(Array1<f64>, Array1<f64>)>,
    mu: (Array2<f64>, Array1<f64>),
    lv: (Array2<f64>, Array1<f64>),
    dec: Vec<(Array2<f64>, Array1<f64>)>,
    out: (Array2<f64>, Array1<f64>),
}

impl VaeGrads {
    fn zeros_like(params: &VaeParams) -> VaeGrads {
        let zero = |d: &super::layers::Dense| {
            (
                Array2::zeros((d.out_dim(), d.in_dim())),
                Array1::zeros(d.out_dim()),
            )
        };
        VaeGrads {
            enc: params.enc.iter().map(zero).collect(),
            bn: params
                .enc_bn
                .as_ref()
                .map(|bn| (Array1::zeros(bn.gamma.len()), Array1::zeros(bn.beta.len()))),
            mu: zero(&params.mu_head),
            lv: zero(&params.logvar_head),
            dec: params.dec.iter().map(zero).collect(),
            out: zero(&params.out),
        }
    }

    /// Same canonical order as `VaeParams::flat`.
    pub(crate) fn flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        let push = |v: &mut Vec<f64>, g: &(Array2<f64>, Array1<f64>)| {
            v.extend(g.0.iter());
            v.extend(g.1.iter());
        };
        for g in &self.enc {
            push(&mut v, g);
        }
        if let Some((dgamma, dbeta)) = &self.bn {
            v.extend(dgamma.iter());
            v.extend(dbeta.iter());
        }
        push(&mut v, &self.mu);
        push(&mut v, &self.lv);
        for g in &self.dec {
            push(&mut v, g);
        }
        push(&mut v, &self.out);
        v
    }
}

/// Analytic KL(q ‖ N(0, I)) summed over dimensions and batch rows.
pub(crate) fn kl_total(mu: &Array2<f64>, lv: &Array2<f64>) -> f64 {
    mu.iter()
        .zip(lv.iter())
        .map(|(&m, &v)| 0.5 * (m * m + v.exp() - v - 1.0))
        .sum()
}

/// Training-mode forward and backward pass over one batch. Returns the
/// batch-mean loss and the gradients. Dropout masks and the
/// reparameterization noise are drawn from `rng`; batch-norm running
/// statistics are updated as a side effect.
pub(crate) fn loss_and_grads(
    params: &mut VaeParams,
    x: &Array2<f64>,
    rng: &mut ChaCha8Rng,
) -> (f64, VaeGrads) {
    let arch = params.arch().clone();
    let b = x.nrows();
    let bf = b as f64;
    let middle = arch.middle_index();
    let rate = arch.dropout_rate;

    // encoder forward
    let mut enc_inputs: Vec<Array2<f64>> = Vec::with_capacity(params.enc.len());
    let mut enc_pres: Vec<Array2<f64>> = Vec::with_capacity(params.enc.len());
    let mut enc_mask: Option<Array2<f64>> = None;
    let mut bn_cache = None;
    let mut a = x.clone();
    let n_enc = params.enc.len();
    for k in 0..n_enc {
        let mut pre = params.enc[k].forward(&a);
        if k == middle {
            if let Some(bn) = params.enc_bn.as_mut() {
                let (y, cache) = bn.forward_train(&pre);
                pre = y;
                bn_cache = Some(cache);
            }
        }
        let mut h = elu_forward(&pre);
        if k == 0 && rate > 0.0 {
            let mask = dropout_mask(h.dim(), rate, rng);
            h *= &mask;
            enc_mask = Some(mask);
        }
        enc_inputs.push(a);
        enc_pres.push(pre);
        a = h;
    }
    let head_in = a;
    let mu = params.mu_head.forward(&head_in);
    let lv = params.logvar_head.forward(&head_in);
    let sigma = lv.mapv(|v| (0.5 * v).exp());
    let eps = Array2::from_shape_fn((b, arch.latent_dim), |_| {
        rng.sample::<f64, _>(StandardNormal)
    });
    let z = &mu + &(&sigma * &eps);

    // decoder forward
    let mut dec_inputs: Vec<Array2<f64>> = Vec::with_capacity(params.dec.len());
    let mut dec_pres: Vec<Array2<f64>> = Vec::with_capacity(params.dec.len());
    let mut dec_mask: Option<Array2<f64>> = None;
    let mut d = z.clone();
    let n_dec = params.dec.len();
    for k in 0..n_dec {
        let pre = params.dec[k].forward(&d);
        let mut h = elu_forward(&pre);
        if k == middle && rate > 0.0 {
            let mask = dropout_mask(h.dim(), rate, rng);
            h *= &mask;
            dec_mask = Some(mask);
        }
        dec_inputs.push(d);
        dec_pres.push(pre);
        d = h;
    }
    let dec_head_in = d;
    let logits = params.out.forward(&dec_head_in);

    // loss: cross-entropy summed over units + KL, averaged over the batch
    let recon_total: f64 = logits
        .iter()
        .zip(x.iter())
        .map(|(&l, &t)| softplus(l) - t * l)
        .sum();
    let loss = (recon_total + kl_total(&mu, &lv)) / bf;

    // backward
    let mut grads = VaeGrads::zeros_like(params);
    let mut g_logits = logits.mapv(sigmoid) - x;
    g_logits /= bf;
    let mut g = params
        .out
        .backward(&dec_head_in, &g_logits, &mut grads.out.0, &mut grads.out.1);
    for k in (0..n_dec).rev() {
        if k == middle {
            if let Some(mask) = &dec_mask {
                g *= mask;
            }
        }
        let gpre = g * elu_grad(&dec_pres[k]);
        let (dw, db) = &mut grads.dec[k];
        g = params.dec[k].backward(&dec_inputs[k], &gpre, dw, db);
    }
    let dz = g;

    // reparameterization and KL terms
    let dmu = &dz + &(&mu / bf);
    let dlv = &(&dz * &eps * &sigma) * 0.5 + &sigma.mapv(|s| s * s - 1.0) * (0.5 / bf);
    let g_mu = params
        .mu_head
        .backward(&head_in, &dmu, &mut grads.mu.0, &mut grads.mu.1);
    let g_lv = params
        .logvar_head
        .backward(&head_in, &dlv, &mut grads.lv.0, &mut grads.lv.1);
    let mut g = g_mu + g_lv;
    for k in (0..n_enc).rev() {
        if k == 0 {
            if let Some(mask) = &enc_mask {
                g *= mask;
            }
        }
        let mut gpre = g * elu_grad(&enc_pres[k]);
        if k == middle {
            if let (Some(bn), Some(cache)) = (&params.enc_bn, &bn_cache) {
                let (dgamma, dbeta) = grads.bn.as_mut().expect("bn grads allocated");
                gpre = bn.backward(cache, &gpre, dgamma, dbeta);
            }
        }
        let (dw, db) = &mut grads.enc[k];
        g = params.enc[k].backward(&enc_inputs[k], &gpre, dw, db);
    }

    (loss, grads)
}

/// Training-mode loss and flattened gradients for one one-hot batch, with
/// dropout masks and reparameterization noise drawn from a fresh stream
/// seeded by `noise_seed`. The same seed and parameters reproduce the same
/// loss, so central-difference probes of the analytic gradients work from
/// outside the crate. The caller's batch-norm running statistics are left
/// untouched. Gradients are in the canonical `VaeParams::flat` order.
pub fn batch_loss_and_grad(
    params: &VaeParams,
    batch: &Array2<f64>,
    noise_seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let want = params.arch().input_dim();
    if batch.ncols() != want {
        return Err(Error::DimensionMismatch(format!(
            "batch has {} columns, network input is {want}",
            batch.ncols()
        )));
    }
    if batch.nrows() == 0 {
        return Err(Error::EmptyAlignment);
    }
    let mut scratch = params.clone();
    let mut rng = stream_rng(noise_seed, 0);
    let (loss, grads) = loss_and_grads(&mut scratch, batch, &mut rng);
    Ok((loss, grads.flat()))
}

/// Evaluation-mode mean loss over the given rows (dropout off, batch-norm
/// running statistics, one latent draw per sequence).
pub(crate) fn eval_loss(
    params: &VaeParams,
    msa: &Msa,
    rows: &[usize],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let q = params.arch().q;
    let latent = params.arch().latent_dim;
    let mut total = 0.0;
    for chunk in rows.chunks(batch_size) {
        let x = one_hot_rows(&msa.data().view(), chunk, q);
        let (mu, lv) = params.encode_eval_batch(&x);
        let sigma = lv.mapv(|v| (0.5 * v).exp());
        let eps = Array2::from_shape_fn((chunk.len(), latent), |_| {
            rng.sample::<f64, _>(StandardNormal)
        });
        let z = &mu + &(&sigma * &eps);
        let logits = params.decode_logits_eval(&z);
        let recon: f64 = logits
            .iter()
            .zip(x.iter())
            .map(|(&l, &t)| softplus(l) - t * l)
            .sum();
        total += recon + kl_total(&mu, &lv);
    }
    total / rows.len() as f64
}

/// First-moment/second-moment adaptive optimizer with bias correction.
pub(crate) struct Adam {
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    t: u32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub(crate) fn new(lr: f64, b1: f64, b2: f64, eps: f64, n: usize) -> Adam {
        Adam {
            lr,
            b1,
            b2,
            eps,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub(crate) fn step(&mut self, p: &mut [f64], g: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.b1.powi(self.t as i32);
        let bc2 = 1.0 - self.b2.powi(self.t as i32);
        for i in 0..p.len() {
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g[i];
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g[i] * g[i];
            p[i] -= self.lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + self.eps);
        }
    }
}

/// Trains a fresh network on the alignment: a seeded shuffle holds out the
/// validation fraction, the rest is optimized by Adam over mini-batches
/// for a fixed number of epochs. Aborts with the epoch index when the
/// loss stops being finite. Bit-deterministic given the config.
pub fn train_vae(msa: &Msa, arch: &VaeArch, config: &TrainConfig) -> Result<VaeTraining> {
    arch.validate()?;
    config.validate()?;
    if msa.seq_len() != arch.l || msa.alphabet().q() != arch.q {
        return Err(Error::DimensionMismatch(format!(
            "alignment ({}, q={}) for architecture (L={}, q={})",
            msa.seq_len(),
            msa.alphabet().q(),
            arch.l,
            arch.q
        )));
    }
    let n = msa.n_seqs();
    if n < config.batch_size {
        return Err(Error::InsufficientRows {
            requested: config.batch_size,
            available: n,
        });
    }

    let mut params = init_with_alphabet(
        arch,
        msa.alphabet().clone(),
        derive_seed(config.seed, "vae-init"),
    )?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(derive_seed(config.seed, "vae-split"), 0));
    let n_val = ((n as f64 * config.validation_fraction).round() as usize).clamp(1, n - 1);
    let val_rows: Vec<usize> = order[..n_val].to_vec();
    let mut train_rows: Vec<usize> = order[n_val..].to_vec();

    let mut noise_rng = stream_rng(derive_seed(config.seed, "vae-noise"), 0);
    let mut shuffle_rng = stream_rng(derive_seed(config.seed, "vae-shuffle"), 0);
    let eval_seed = derive_seed(config.seed, "vae-eval");

    let mut flat = params.flat();
    let mut adam = Adam::new(
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
        flat.len(),
    );
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        train_rows.shuffle(&mut shuffle_rng);
        for chunk in train_rows.chunks(config.batch_size) {
            let x = one_hot_rows(&msa.data().view(), chunk, arch.q);
            let (loss, grads) = loss_and_grads(&mut params, &x, &mut noise_rng);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            flat.copy_from_slice(&params.flat());
            adam.step(&mut flat, &grads.flat());
            params.set_flat(&flat);
        }
        let mut eval_rng = stream_rng(eval_seed, epoch as u64);
        let train_loss = eval_loss(&params, msa, &train_rows, config.batch_size, &mut eval_rng);
        let val_loss = eval_loss(&params, msa, &val_rows, config.batch_size, &mut eval_rng);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.push(EpochLoss {
            epoch,
            train_loss,
            val_loss,
        });
    }
    Ok(VaeTraining { params, history })
}
