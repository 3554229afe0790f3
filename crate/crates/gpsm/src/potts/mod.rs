//! Pairwise Potts model: energy, gauge fixing, SCAD regularization,
//! multi-chain Gibbs sampling, and inverse-Ising inference by marginal
//! matching.
//!
//! The energy convention is E(S) = Σ_i h^i(s_i) + Σ_{i<j} J^{ij}(s_i, s_j)
//! with p(S) ∝ exp(−E(S)): negative couplings favor a pair. Energies are
//! defined up to an additive constant; serialized models are gauge-fixed to
//! the zero-sum convention so parameters are comparable across runs.

mod fit;
mod gibbs;

pub use fit::{fit_potts, FitConfig, FitRound, PottsFit};
pub use gibbs::gibbs_sample;

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::marginals::{pair_count, pair_index, pairs};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Schema tag for the JSON model file.
pub const POTTS_JSON_VERSION: &str = "potts-1";

/// Gauge label for parameters as produced (no convention enforced).
pub const GAUGE_NONE: &str = "none";
/// Gauge label after zero-sum fixing.
pub const GAUGE_ZERO_SUM: &str = "zero-sum";

/// Fields and pairwise couplings of a Potts model over (L, q).
///
/// Couplings are stored pair-major in lexicographic (i < j) order, one q×q
/// table per pair, row index = state of i, column index = state of j.
#[derive(Debug, Clone, PartialEq)]
pub struct PottsParams {
    h: Array2<f64>,
    j: Vec<Array2<f64>>,
    alphabet: Alphabet,
    gauge_tag: String,
}

impl PottsParams {
    pub fn new(h: Array2<f64>, j: Vec<Array2<f64>>, alphabet: Alphabet) -> Result<Self> {
        Self::with_gauge(h, j, alphabet, GAUGE_NONE)
    }

    pub fn with_gauge(
        h: Array2<f64>,
        j: Vec<Array2<f64>>,
        alphabet: Alphabet,
        gauge_tag: &str,
    ) -> Result<Self> {
        let (l, q) = h.dim();
        if l < 2 {
            return Err(Error::InvalidArgument("Potts model needs L >= 2".into()));
        }
        if q != alphabet.q() {
            return Err(Error::DimensionMismatch(format!(
                "h has {q} states for alphabet q={}",
                alphabet.q()
            )));
        }
        if j.len() != pair_count(l) {
            return Err(Error::DimensionMismatch(format!(
                "{} coupling tables for L={l} (need {})",
                j.len(),
                pair_count(l)
            )));
        }
        if let Some(bad) = j.iter().find(|t| t.dim() != (q, q)) {
            return Err(Error::DimensionMismatch(format!(
                "coupling table has shape {:?}, expected ({q}, {q})",
                bad.dim()
            )));
        }
        if h.iter().any(|v| !v.is_finite()) || j.iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument(
                "Potts parameters must be finite".into(),
            ));
        }
        Ok(PottsParams {
            h,
            j,
            alphabet,
            gauge_tag: gauge_tag.to_string(),
        })
    }

    /// Zero parameters: the uniform distribution over sequences.
    pub fn zero(l: usize, alphabet: Alphabet) -> Result<Self> {
        let q = alphabet.q();
        PottsParams::new(
            Array2::zeros((l, q)),
            vec![Array2::zeros((q, q)); pair_count(l)],
            alphabet,
        )
    }

    pub fn l(&self) -> usize {
        self.h.nrows()
    }

    pub fn q(&self) -> usize {
        self.h.ncols()
    }

    pub fn h(&self) -> &Array2<f64> {
        &self.h
    }

    pub fn couplings(&self) -> &[Array2<f64>] {
        &self.j
    }

    /// Coupling table for pair (i, j), i < j.
    pub fn coupling(&self, i: usize, j: usize) -> Result<&Array2<f64>> {
        if i >= j || j >= self.l() {
            return Err(Error::InvalidArgument(format!(
                "pair ({i},{j}) invalid for L={}",
                self.l()
            )));
        }
        Ok(&self.j[pair_index(self.l(), i, j)])
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn gauge_tag(&self) -> &str {
        &self.gauge_tag
    }

    /// Largest |J| entry; a cheap summary used by shrinkage tests.
    pub fn max_abs_coupling(&self) -> f64 {
        self.j
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Converts to the zero-sum gauge: every coupling table gets zero row
    /// and column means, the removed parts are absorbed into the fields, and
    /// each field column is centered. E(S) changes by a sequence-independent
    /// constant only.
    pub fn to_zero_sum_gauge(&self) -> PottsParams {
        let l = self.l();
        let q = self.q();
        let qf = q as f64;
        let mut h = self.h.clone();
        let mut j_out = Vec::with_capacity(self.j.len());
        for ((i, jj), table) in pairs(l).zip(&self.j) {
            let total = table.sum() / (qf * qf);
            let row_means: Vec<f64> = (0..q).map(|a| table.row(a).sum() / qf).collect();
            let col_means: Vec<f64> = (0..q).map(|b| table.column(b).sum() / qf).collect();
            let mut fixed = Array2::zeros((q, q));
            for a in 0..q {
                for b in 0..q {
                    fixed[(a, b)] = table[(a, b)] - row_means[a] - col_means[b] + total;
                }
            }
            j_out.push(fixed);
            for a in 0..q {
                h[(i, a)] += row_means[a];
                h[(jj, a)] += col_means[a];
            }
        }
        for i in 0..l {
            let mean = h.row(i).sum() / qf;
            for a in 0..q {
                h[(i, a)] -= mean;
            }
        }
        PottsParams {
            h,
            j: j_out,
            alphabet: self.alphabet.clone(),
            gauge_tag: GAUGE_ZERO_SUM.to_string(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let wire = PottsWire {
            version: POTTS_JSON_VERSION.to_string(),
            l: self.l(),
            q: self.q(),
            gauge: self.gauge_tag.clone(),
            alphabet: self.alphabet.clone(),
            h: self.h.rows().into_iter().map(|r| r.to_vec()).collect(),
            j: self.j.iter().map(|t| t.iter().cloned().collect()).collect(),
        };
        Ok(serde_json::to_string_pretty(&wire)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: PottsWire = serde_json::from_str(text)?;
        if wire.version != POTTS_JSON_VERSION {
            return Err(Error::ModelFormat(format!(
                "expected model version '{POTTS_JSON_VERSION}', found '{}'",
                wire.version
            )));
        }
        let (l, q) = (wire.l, wire.q);
        if wire.h.len() != l || wire.h.iter().any(|r| r.len() != q) {
            return Err(Error::ModelFormat("field matrix shape mismatch".into()));
        }
        if wire.j.len() != pair_count(l) || wire.j.iter().any(|t| t.len() != q * q) {
            return Err(Error::ModelFormat("coupling table shape mismatch".into()));
        }
        let mut h = Array2::zeros((l, q));
        for (i, row) in wire.h.iter().enumerate() {
            for (a, &v) in row.iter().enumerate() {
                h[(i, a)] = v;
            }
        }
        let j = wire
            .j
            .iter()
            .map(|flat| Array2::from_shape_vec((q, q), flat.clone()).expect("length checked above"))
            .collect();
        PottsParams::with_gauge(h, j, wire.alphabet, &wire.gauge)
    }
}

/// Wire form: couplings pair-major, row-major within each pair.
#[derive(Serialize, Deserialize)]
struct PottsWire {
    version: String,
    #[serde(rename = "L")]
    l: usize,
    q: usize,
    gauge: String,
    alphabet: Alphabet,
    h: Vec<Vec<f64>>,
    #[serde(rename = "J")]
    j: Vec<Vec<f64>>,
}

/// E(S) = Σ_i h^i(s_i) + Σ_{i<j} J^{ij}(s_i, s_j).
pub fn potts_energy(params: &PottsParams, seq: &[u8]) -> Result<f64> {
    let l = params.l();
    if seq.len() != l {
        return Err(Error::DimensionMismatch(format!(
            "sequence length {} for L={l}",
            seq.len()
        )));
    }
    let q = params.q() as u8;
    if let Some(&bad) = seq.iter().find(|&&c| c >= q) {
        return Err(Error::InvalidArgument(format!(
            "residue code {bad} out of range for q={q}"
        )));
    }
    let mut e = 0.0;
    for (i, &si) in seq.iter().enumerate() {
        e += params.h[(i, si as usize)];
    }
    for ((i, j), table) in pairs(l).zip(&params.j) {
        e += table[(seq[i] as usize, seq[j] as usize)];
    }
    Ok(e)
}

/// Parameter counts (potts, indep) after gauge reduction:
/// L(L−1)/2·(q−1)² + L(q−1) and L(q−1).
pub fn parameter_count(l: usize, q: usize) -> Result<(u64, u64)> {
    if l < 2 || q < 2 {
        return Err(Error::InvalidArgument(format!(
            "parameter count needs L >= 2 and q >= 2, got ({l}, {q})"
        )));
    }
    let (l, q) = (l as u64, q as u64);
    let indep = l * (q - 1);
    let potts = l * (l - 1) / 2 * (q - 1) * (q - 1) + indep;
    Ok((potts, indep))
}

/// SCAD penalty and its derivative at one coupling value.
///
/// Piecewise: λ|x| inside |x| ≤ λ (lasso-like shrinkage of small couplings),
/// a quadratic blend on λ < |x| ≤ aλ, constant (a+1)λ²/2 beyond (no bias for
/// large couplings, gradient 0).
pub fn scad_penalty(x: f64, lambda: f64, a: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "SCAD strength must be positive, got {lambda}"
        )));
    }
    if !(a > 2.0) {
        return Err(Error::InvalidArgument(format!(
            "SCAD shape must exceed 2, got {a}"
        )));
    }
    let ax = x.abs();
    let (penalty, gradient) = if ax <= lambda {
        (lambda * ax, lambda * x.signum() * (ax > 0.0) as u8 as f64)
    } else if ax <= a * lambda {
        (
            (2.0 * a * lambda * ax - ax * ax - lambda * lambda) / (2.0 * (a - 1.0)),
            (a * lambda - ax) * x.signum() / (a - 1.0),
        )
    } else {
        ((a + 1.0) * lambda * lambda / 2.0, 0.0)
    };
    Ok((penalty, gradient))
}
