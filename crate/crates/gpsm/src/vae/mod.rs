//! Dense variational autoencoder over one-hot encoded sequences.
//!
//! The encoder maps a one-hot sequence through ELU-activated dense layers
//! to a diagonal Gaussian posterior over the latent space; the decoder
//! maps latent vectors back to an L×q table of per-unit Bernoulli
//! parameters through sigmoid outputs. Training (reparameterized ELBO
//! with Adam), likelihood estimation, and sampling live in submodules.

mod layers;
mod likelihood;
mod train;

pub use likelihood::{elbo, log_prob_importance};
pub use train::{batch_loss_and_grad, train_vae, EpochLoss, TrainConfig, VaeTraining};

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::msa::Msa;
use crate::rng::stream_rng;
use layers::{elu_forward, one_hot_seq, sigmoid, BatchNorm, Dense};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Schema tag for the JSON model file.
pub const VAE_JSON_VERSION: &str = "svae-1";

/// A latent dimension counts as collapsed when its mean posterior variance
/// exceeds this threshold...
pub const COLLAPSE_SIGMA2_THRESHOLD: f64 = 0.95;
/// ...while the variance of its posterior means stays below this one.
pub const COLLAPSE_MU_VARIANCE_THRESHOLD: f64 = 0.05;

/// Symbol pool for the placeholder alphabet of an untrained network.
const PLACEHOLDER_SYMBOLS: &str = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";

/// Network shape: encoder widths are mirrored in the decoder, hidden
/// layers are ELU-activated, the output layer is sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeArch {
    /// Sequence length.
    #[serde(rename = "L")]
    pub l: usize,
    /// Alphabet size.
    pub q: usize,
    /// Encoder hidden-layer widths, first to last.
    pub hidden_widths: Vec<usize>,
    /// Latent-space dimension.
    pub latent_dim: usize,
    /// Dropout rate applied after the first encoder layer and after the
    /// middle decoder layer during training.
    pub dropout_rate: f64,
    /// Batch normalization on the middle encoder layer (pre-activation).
    pub use_batch_norm: bool,
}

impl VaeArch {
    /// The reference architecture: three 250-wide layers, 7 latent
    /// dimensions, 30% dropout, batch norm on.
    pub fn full_scale(l: usize, q: usize) -> VaeArch {
        VaeArch {
            l,
            q,
            hidden_widths: vec![250, 250, 250],
            latent_dim: 7,
            dropout_rate: 0.30,
            use_batch_norm: true,
        }
    }

    /// Same shape scaled to small alignments: widths max(32, L).
    pub fn desk_scale(l: usize, q: usize) -> VaeArch {
        let width = l.max(32);
        VaeArch {
            hidden_widths: vec![width, width, width],
            ..VaeArch::full_scale(l, q)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.q < 2 {
            return Err(Error::InvalidArgument(format!(
                "network needs L >= 1 and q >= 2, got ({}, {})",
                self.l, self.q
            )));
        }
        if self.latent_dim == 0 {
            return Err(Error::InvalidArgument(
                "latent dimension must be >= 1".into(),
            ));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(Error::InvalidArgument(
                "hidden widths must be non-empty and >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(
                "dropout rate must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.l * self.q
    }

    /// Index of the middle hidden layer (batch-norm and decoder-dropout
    /// site).
    pub(crate) fn middle_index(&self) -> usize {
        self.hidden_widths.len() / 2
    }
}

/// Weights of the encoder, posterior heads, and decoder, plus the
/// architecture and the alphabet sampled sequences are written in.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams {
    arch: VaeArch,
    alphabet: Alphabet,
    pub(crate) enc: Vec<Dense>,
    pub(crate) enc_bn: Option<BatchNorm>,
    pub(crate) mu_head: Dense,
    pub(crate) logvar_head: Dense,
    pub(crate) dec: Vec<Dense>,
    pub(crate) out: Dense,
}

/// Deterministic fan-in-scaled uniform initialization. The alphabet is a
/// placeholder (the first q symbols of a fixed pool) until the network is
/// trained on an alignment, which installs the alignment's alphabet.
pub fn init_vae(arch: &VaeArch, seed: u64) -> Result<VaeParams> {
    arch.validate()?;
    let pool: Vec<char> = PLACEHOLDER_SYMBOLS.chars().collect();
    if arch.q > pool.len() {
        return Err(Error::InvalidArgument(format!(
            "placeholder alphabet supports q <= {}, got {}; train on an alignment instead",
            pool.len(),
            arch.q
        )));
    }
    let symbols: String = pool[..arch.q].iter().collect();
    init_with_alphabet(arch, Alphabet::from_spec(&symbols)?, seed)
}

pub(crate) fn init_with_alphabet(
    arch: &VaeArch,
    alphabet: Alphabet,
    seed: u64,
) -> Result<VaeParams> {
    arch.validate()?;
    if alphabet.q() != arch.q {
        return Err(Error::DimensionMismatch(format!(
            "alphabet q={} for architecture q={}",
            alphabet.q(),
            arch.q
        )));
    }
    let mut rng = stream_rng(seed, 0);
    let mut enc = Vec::with_capacity(arch.hidden_widths.len());
    let mut in_dim = arch.input_dim();
    for &width in &arch.hidden_widths {
        enc.push(Dense::init(width, in_dim, &mut rng));
        in_dim = width;
    }
    let enc_bn = arch
        .use_batch_norm
        .then(|| BatchNorm::new(arch.hidden_widths[arch.middle_index()]));
    let mu_head = Dense::init(arch.latent_dim, in_dim, &mut rng);
    let logvar_head = Dense::init(arch.latent_dim, in_dim, &mut rng);
    let mut dec = Vec::with_capacity(arch.hidden_widths.len());
    let mut dec_in = arch.latent_dim;
    for &width in arch.hidden_widths.iter().rev() {
        dec.push(Dense::init(width, dec_in, &mut rng));
        dec_in = width;
    }
    let out = Dense::init(arch.input_dim(), dec_in, &mut rng);
    Ok(VaeParams {
        arch: arch.clone(),
        alphabet,
        enc,
        enc_bn,
        mu_head,
        logvar_head,
        dec,
        out,
    })
}

impl VaeParams {
    pub fn arch(&self) -> &VaeArch {
        &self.arch
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// Encoder hidden stack in evaluation mode (dropout off, batch norm on
    /// running statistics).
    pub(crate) fn encode_hidden_eval(&self, x: &Array2<f64>) -> Array2<f64> {
        let middle = self.arch.middle_index();
        let mut a = x.clone();
        for (k, layer) in self.enc.iter().enumerate() {
            let mut pre = layer.forward(&a);
            if k == middle {
                if let Some(bn) = &self.enc_bn {
                    pre = bn.forward_eval(&pre);
                }
            }
            a = elu_forward(&pre);
        }
        a
    }

    /// Posterior parameters (μ, log σ²) for a batch, evaluation mode.
    pub(crate) fn encode_eval_batch(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let h = self.encode_hidden_eval(x);
        (self.mu_head.forward(&h), self.logvar_head.forward(&h))
    }

    /// Decoder logits for a batch of latent vectors, evaluation mode.
    pub(crate) fn decode_logits_eval(&self, z: &Array2<f64>) -> Array2<f64> {
        let mut a = z.clone();
        for layer in &self.dec {
            a = elu_forward(&layer.forward(&a));
        }
        self.out.forward(&a)
    }

    /// All trainable tensors flattened in a fixed canonical order (encoder
    /// layers, batch-norm scale/shift, heads, decoder layers, output).
    /// Running statistics are excluded: they are not optimized.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        let push_dense = |v: &mut Vec<f64>, d: &Dense| {
            v.extend(d.w.iter());
            v.extend(d.b.iter());
        };
        for d in &self.enc {
            push_dense(&mut v, d);
        }
        if let Some(bn) = &self.enc_bn {
            v.extend(bn.gamma.iter());
            v.extend(bn.beta.iter());
        }
        push_dense(&mut v, &self.mu_head);
        push_dense(&mut v, &self.logvar_head);
        for d in &self.dec {
            push_dense(&mut v, d);
        }
        push_dense(&mut v, &self.out);
        v
    }

    /// Writes a flat vector (same canonical order as `flat`) back into the
    /// tensors. Panics if the length differs from the trainable count.
    pub fn set_flat(&mut self, flat: &[f64]) {
        let expected = self.flat().len();
        assert_eq!(
            flat.len(),
            expected,
            "flat parameter vector has {} entries, network needs {expected}",
            flat.len()
        );
        let mut pos = 0usize;
        let take_dense = |pos: &mut usize, d: &mut Dense| {
            for w in d.w.iter_mut() {
                *w = flat[*pos];
                *pos += 1;
            }
            for b in d.b.iter_mut() {
                *b = flat[*pos];
                *pos += 1;
            }
        };
        for d in self.enc.iter_mut() {
            take_dense(&mut pos, d);
        }
        if let Some(bn) = self.enc_bn.as_mut() {
            for g in bn.gamma.iter_mut() {
                *g = flat[pos];
                pos += 1;
            }
            for b in bn.beta.iter_mut() {
                *b = flat[pos];
                pos += 1;
            }
        }
        take_dense(&mut pos, &mut self.mu_head);
        take_dense(&mut pos, &mut self.logvar_head);
        for d in self.dec.iter_mut() {
            take_dense(&mut pos, d);
        }
        take_dense(&mut pos, &mut self.out);
        debug_assert_eq!(pos, flat.len());
    }

    pub fn to_json(&self) -> Result<String> {
        let wire = VaeWire {
            version: VAE_JSON_VERSION.to_string(),
            arch: self.arch.clone(),
            alphabet: self.alphabet.clone(),
            weights: WeightsWire {
                encoder: self.enc.iter().map(dense_to_wire).collect(),
                encoder_batch_norm: self.enc_bn.as_ref().map(|bn| BnWire {
                    gamma: bn.gamma.to_vec(),
                    beta: bn.beta.to_vec(),
                    running_mean: bn.running_mean.to_vec(),
                    running_var: bn.running_var.to_vec(),
                }),
                mu_head: dense_to_wire(&self.mu_head),
                logvar_head: dense_to_wire(&self.logvar_head),
                decoder: self.dec.iter().map(dense_to_wire).collect(),
                output: dense_to_wire(&self.out),
            },
        };
        Ok(serde_json::to_string_pretty(&wire)?)
    }

    pub fn from_json(text: &str) -> Result<VaeParams> {
        let wire: VaeWire = serde_json::from_str(text)?;
        if wire.version != VAE_JSON_VERSION {
            return Err(Error::ModelFormat(format!(
                "expected model version '{VAE_JSON_VERSION}', found '{}'",
                wire.version
            )));
        }
        let arch = wire.arch;
        arch.validate()?;
        if wire.alphabet.q() != arch.q {
            return Err(Error::ModelFormat(format!(
                "alphabet q={} does not match architecture q={}",
                wire.alphabet.q(),
                arch.q
            )));
        }
        if wire.weights.encoder.len() != arch.hidden_widths.len()
            || wire.weights.decoder.len() != arch.hidden_widths.len()
        {
            return Err(Error::ModelFormat(
                "hidden-layer count does not match architecture".into(),
            ));
        }
        if arch.use_batch_norm != wire.weights.encoder_batch_norm.is_some() {
            return Err(Error::ModelFormat(
                "batch-norm weights inconsistent with use_batch_norm".into(),
            ));
        }
        let mut enc = Vec::with_capacity(arch.hidden_widths.len());
        let mut in_dim = arch.input_dim();
        for (wire_layer, &width) in wire.weights.encoder.iter().zip(&arch.hidden_widths) {
            enc.push(dense_from_wire(wire_layer, width, in_dim)?);
            in_dim = width;
        }
        let enc_bn = match &wire.weights.encoder_batch_norm {
            Some(bn) => {
                let dim = arch.hidden_widths[arch.middle_index()];
                if [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var]
                    .iter()
                    .any(|v| v.len() != dim)
                    || [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var]
                        .iter()
                        .any(|v| v.iter().any(|x| !x.is_finite()))
                {
                    return Err(Error::ModelFormat("malformed batch-norm weights".into()));
                }
                Some(BatchNorm {
                    gamma: Array1::from_vec(bn.gamma.clone()),
                    beta: Array1::from_vec(bn.beta.clone()),
                    running_mean: Array1::from_vec(bn.running_mean.clone()),
                    running_var: Array1::from_vec(bn.running_var.clone()),
                })
            }
            None => None,
        };
        let mu_head = dense_from_wire(&wire.weights.mu_head, arch.latent_dim, in_dim)?;
        let logvar_head = dense_from_wire(&wire.weights.logvar_head, arch.latent_dim, in_dim)?;
        let mut dec = Vec::with_capacity(arch.hidden_widths.len());
        let mut dec_in = arch.latent_dim;
        for (wire_layer, &width) in wire
            .weights
            .decoder
            .iter()
            .zip(arch.hidden_widths.iter().rev())
        {
            dec.push(dense_from_wire(wire_layer, width, dec_in)?);
            dec_in = width;
        }
        let out = dense_from_wire(&wire.weights.output, arch.input_dim(), dec_in)?;
        Ok(VaeParams {
            arch,
            alphabet: wire.alphabet,
            enc,
            enc_bn,
            mu_head,
            logvar_head,
            dec,
            out,
        })
    }
}

fn dense_to_wire(d: &Dense) -> DenseWire {
    DenseWire {
        w: d.w.rows().into_iter().map(|r| r.to_vec()).collect(),
        b: d.b.to_vec(),
    }
}

fn dense_from_wire(wire: &DenseWire, out_dim: usize, in_dim: usize) -> Result<Dense> {
    if wire.w.len() != out_dim
        || wire.w.iter().any(|r| r.len() != in_dim)
        || wire.b.len() != out_dim
    {
        return Err(Error::ModelFormat(format!(
            "dense layer shape mismatch (expected {out_dim}x{in_dim})"
        )));
    }
    if wire
        .w
        .iter()
        .flatten()
        .chain(wire.b.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::ModelFormat("non-finite network weight".into()));
    }
    let mut w = Array2::zeros((out_dim, in_dim));
    for (i, row) in wire.w.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            w[(i, j)] = v;
        }
    }
    Ok(Dense {
        w,
        b: Array1::from_vec(wire.b.clone()),
    })
}

#[derive(Serialize, Deserialize)]
struct DenseWire {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BnWire {
    gamma: Vec<f64>,
    beta: Vec<f64>,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct WeightsWire {
    encoder: Vec<DenseWire>,
    encoder_batch_norm: Option<BnWire>,
    mu_head: DenseWire,
    logvar_head: DenseWire,
    decoder: Vec<DenseWire>,
    output: DenseWire,
}

#[derive(Serialize, Deserialize)]
struct VaeWire {
    version: String,
    arch: VaeArch,
    alphabet: Alphabet,
    weights: WeightsWire,
}

/// Gaussian posterior parameters (μ, σ²) of one sequence, evaluation mode.
pub fn encode(params: &VaeParams, seq: &[u8]) -> Result<(Array1<f64>, Array1<f64>)> {
    check_seq(params, seq)?;
    let x = one_hot_seq(seq, params.arch.q);
    let (mu, lv) = params.encode_eval_batch(&x);
    Ok((mu.row(0).to_owned(), lv.row(0).mapv(f64::exp)))
}

/// L×q table of Bernoulli parameters for one latent vector, evaluation
/// mode; all entries lie strictly inside (0, 1).
pub fn decode(params: &VaeParams, z: &Array1<f64>) -> Result<Array2<f64>> {
    if z.len() != params.arch.latent_dim {
        return Err(Error::DimensionMismatch(format!(
            "latent vector length {} for latent_dim {}",
            z.len(),
            params.arch.latent_dim
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "latent vector must be finite".into(),
        ));
    }
    let zb = z.clone().insert_axis(ndarray::Axis(0));
    let logits = params.decode_logits_eval(&zb);
    let table = logits.row(0).mapv(sigmoid);
    Ok(table
        .into_shape_with_order((params.arch.l, params.arch.q))
        .expect("L*q logits"))
}

fn check_seq(params: &VaeParams, seq: &[u8]) -> Result<()> {
    if seq.len() != params.arch.l {
        return Err(Error::DimensionMismatch(format!(
            "sequence length {} for L={}",
            seq.len(),
            params.arch.l
        )));
    }
    if let Some(&bad) = seq.iter().find(|&&c| c as usize >= params.arch.q) {
        return Err(Error::InvalidArgument(format!(
            "residue code {bad} out of range for q={}",
            params.arch.q
        )));
    }
    Ok(())
}

/// Draws one symbol per position from the row-normalized Bernoulli table.
pub(crate) fn sample_from_table(table: &Array2<f64>, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let (l, q) = table.dim();
    let mut seq = Vec::with_capacity(l);
    for i in 0..l {
        let row = table.row(i);
        let total: f64 = row.sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = q - 1;
        for (a, &p) in row.iter().enumerate() {
            acc += p;
            if target < acc {
                chosen = a;
                break;
            }
        }
        seq.push(chosen as u8);
    }
    seq
}

/// Generates n sequences: z ~ N(0, I), decode, then one categorical draw
/// per position from the row-normalized Bernoulli table. Row r uses RNG
/// stream (seed, r), so output is deterministic and order-independent.
pub fn sample_vae(params: &VaeParams, n: usize, seed: u64) -> Result<Msa> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let (l, latent) = (params.arch.l, params.arch.latent_dim);
    let rows: Vec<Vec<u8>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let z = Array1::from_shape_fn(latent, |_| rng.sample::<f64, _>(StandardNormal));
            let table = decode(params, &z).expect("z has latent_dim finite entries");
            sample_from_table(&table, &mut rng)
        })
        .collect();
    let mut data = Array2::zeros((n, l));
    for (r, row) in rows.iter().enumerate() {
        data.row_mut(r)
            .as_slice_mut()
            .expect("row is contiguous")
            .copy_from_slice(row);
    }
    let ids = (0..n).map(|r| format!("s{r}")).collect();
    Msa::from_codes(data, params.alphabet.clone(), ids)
}

/// Per-dimension posterior statistics over an alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct DimDiagnostic {
    pub dim: usize,
    /// Sample variance of the posterior mean μ across sequences.
    pub mu_variance: f64,
    /// Mean posterior variance σ² across sequences.
    pub mean_sigma2: f64,
    /// True when the dimension carries no information: posterior matches
    /// the prior regardless of input.
    pub collapsed: bool,
}

/// Posterior-collapse diagnostics with the thresholds echoed.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDiagnostics {
    pub dims: Vec<DimDiagnostic>,
    pub sigma2_threshold: f64,
    pub mu_variance_threshold: f64,
}

impl PosteriorDiagnostics {
    pub fn n_collapsed(&self) -> usize {
        self.dims.iter().filter(|d| d.collapsed).count()
    }
}

/// Encodes every sequence (evaluation mode) and reports, per latent
/// dimension, the variance of μ across the data and the mean σ². A
/// dimension is flagged collapsed when mean σ² > 0.95 and var μ < 0.05.
pub fn posterior_diagnostics(params: &VaeParams, msa: &Msa) -> Result<PosteriorDiagnostics> {
    if msa.seq_len() != params.arch.l || msa.alphabet().q() != params.arch.q {
        return Err(Error::DimensionMismatch(format!(
            "alignment ({}, q={}) for network (L={}, q={})",
            msa.seq_len(),
            msa.alphabet().q(),
            params.arch.l,
            params.arch.q
        )));
    }
    let rows: Vec<usize> = (0..msa.n_seqs()).collect();
    let x = layers::one_hot_rows(&msa.data().view(), &rows, params.arch.q);
    let (mu, lv) = params.encode_eval_batch(&x);
    let dims = (0..params.arch.latent_dim)
        .map(|d| {
            let mu_col: Vec<f64> = mu.column(d).to_vec();
            let (_, mu_variance) = crate::stats::mean_and_var(&mu_col);
            let mean_sigma2 = lv.column(d).mapv(f64::exp).mean().expect("non-empty");
            DimDiagnostic {
                dim: d,
                mu_variance,
                mean_sigma2,
                collapsed: mean_sigma2 > COLLAPSE_SIGMA2_THRESHOLD
                    && mu_variance < COLLAPSE_MU_VARIANCE_THRESHOLD,
            }
        })
        .collect();
    Ok(PosteriorDiagnostics {
        dims,
        sigma2_threshold: COLLAPSE_SIGMA2_THRESHOLD,
        mu_variance_threshold: COLLAPSE_MU_VARIANCE_THRESHOLD,
    })
}
