//! Site-independent model: analytic fit, exact sampling, exact energies.

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::marginals::univariate_marginals;
use crate::msa::Msa;
use crate::rng::stream_rng;
use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Schema tag for the JSON model file.
pub const INDEP_JSON_VERSION: &str = "indep-1";

/// Per-site field parameters in the normalized convention: every row of
/// exp(-h) sums to 1, so E(S) is an exact negative log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct IndepParams {
    h: Array2<f64>,
    alphabet: Alphabet,
    pseudocount: f64,
}

impl IndepParams {
    /// Validates the normalized-field convention (rows of exp(-h) sum to 1).
    /// Infinite fields are allowed: they encode zero-probability states.
    pub fn new(h: Array2<f64>, alphabet: Alphabet, pseudocount: f64) -> Result<Self> {
        if h.ncols() != alphabet.q() {
            return Err(Error::DimensionMismatch(format!(
                "h has {} columns for q={}",
                h.ncols(),
                alphabet.q()
            )));
        }
        if h.nrows() == 0 {
            return Err(Error::InvalidArgument("h needs at least one row".into()));
        }
        for (i, row) in h.rows().into_iter().enumerate() {
            if row.iter().any(|v| v.is_nan()) {
                return Err(Error::InvalidArgument(format!("NaN field at position {i}")));
            }
            let z: f64 = row.iter().map(|&v| (-v).exp()).sum();
            if (z - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "fields at position {i} are not normalized: sum exp(-h) = {z}"
                )));
            }
        }
        Ok(IndepParams {
            h,
            alphabet,
            pseudocount,
        })
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

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn pseudocount(&self) -> f64 {
        self.pseudocount
    }

    /// The per-site categorical distributions exp(-h).
    pub fn site_distributions(&self) -> Array2<f64> {
        self.h.mapv(|v| (-v).exp())
    }

    pub fn to_json(&self) -> Result<String> {
        let wire = IndepWire {
            version: INDEP_JSON_VERSION.to_string(),
            l: self.l(),
            q: self.q(),
            alphabet: self.alphabet.clone(),
            pseudocount: self.pseudocount,
            h: self.h.rows().into_iter().map(|r| r.to_vec()).collect(),
        };
        Ok(serde_json::to_string_pretty(&wire)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: IndepWire = serde_json::from_str(text)?;
        if wire.version != INDEP_JSON_VERSION {
            return Err(Error::ModelFormat(format!(
                "expected model version '{INDEP_JSON_VERSION}', found '{}'",
                wire.version
            )));
        }
        if wire.h.len() != wire.l || wire.h.iter().any(|row| row.len() != wire.q) {
            return Err(Error::ModelFormat("field matrix shape mismatch".into()));
        }
        let mut h = Array2::zeros((wire.l, wire.q));
        for (i, row) in wire.h.iter().enumerate() {
            for (a, &v) in row.iter().enumerate() {
                h[(i, a)] = v;
            }
        }
        IndepParams::new(h, wire.alphabet, wire.pseudocount)
    }
}

#[derive(Serialize, Deserialize)]
struct IndepWire {
    version: String,
    #[serde(rename = "L")]
    l: usize,
    q: usize,
    alphabet: Alphabet,
    pseudocount: f64,
    h: Vec<Vec<f64>>,
}

/// Fits fields h = -log f̂ from smoothed univariate marginals.
///
/// With pseudocount 0 every symbol must be observed at every column,
/// otherwise a field would be infinite; the error directs the caller to a
/// positive pseudocount.
pub fn fit_indep(msa: &Msa, pseudocount: f64) -> Result<IndepParams> {
    let uni = univariate_marginals(msa, pseudocount)?;
    if pseudocount == 0.0 {
        for i in 0..uni.l() {
            if uni.row(i).iter().any(|&f| f == 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "column {i} has an unobserved symbol; fit with a pseudocount > 0"
                )));
            }
        }
    }
    let h = uni.freqs().mapv(|f| -f.ln());
    IndepParams::new(h, msa.alphabet().clone(), pseudocount)
}

/// Draws n sequences column-independently; deterministic given seed.
/// Rows use per-row RNG streams, so row-level parallelism cannot change
/// the output.
pub fn sample_indep(params: &IndepParams, n: usize, seed: u64) -> Result<Msa> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let l = params.l();
    let dists = params.site_distributions();
    let rows: Vec<Vec<u8>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            (0..l)
                .map(|i| {
                    let u: f64 = rng.random();
                    categorical_draw(dists.row(i).to_slice().expect("contiguous"), u)
                })
                .collect()
        })
        .collect();
    let mut data = Array2::zeros((n, l));
    for (r, row) in rows.iter().enumerate() {
        for (c, &code) in row.iter().enumerate() {
            data[(r, c)] = code;
        }
    }
    let ids = (0..n).map(|r| format!("s{r}")).collect();
    Msa::from_codes(data, params.alphabet().clone(), ids)
}

/// Inverse-CDF draw from an (approximately normalized) frequency vector.
pub(crate) fn categorical_draw(freqs: &[f64], u: f64) -> u8 {
    let mut acc = 0.0;
    for (code, &f) in freqs.iter().enumerate() {
        acc += f;
        if u < acc {
            return code as u8;
        }
    }
    // float round-off at the top of the CDF: return the last nonzero state
    freqs
        .iter()
        .rposition(|&f| f > 0.0)
        .expect("frequency vector has mass") as u8
}

/// E(S) = Σ_i h_i(s_i); -E is the exact log-probability.
pub fn energy_indep(params: &IndepParams, seq: &[u8]) -> Result<f64> {
    if seq.len() != params.l() {
        return Err(Error::DimensionMismatch(format!(
            "sequence length {} for L={}",
            seq.len(),
            params.l()
        )));
    }
    let q = params.q() as u8;
    let mut e = 0.0;
    for (i, &code) in seq.iter().enumerate() {
        if code >= q {
            return Err(Error::InvalidArgument(format!(
                "residue code {code} out of range for q={q}"
            )));
        }
        e += params.h[(i, code as usize)];
    }
    Ok(e)
}
