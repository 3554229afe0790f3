//! Generative-capacity metrics.
//!
//! Five complementary views of how well a synthetic alignment reproduces a
//! target: Pearson correlation of pairwise covariances, the r20 score over
//! higher-order marginals (top-ranked subsequence frequencies at randomly
//! chosen position sets), total variation distance between pairwise Hamming
//! distance distributions (plus a mode/peak rescaling for tail comparison),
//! Pearson correlation of per-sequence statistical energies, and the
//! sample-size extrapolation law that converts an observed correlation into
//! the alignment size needed to reach a desired one.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginals::CovarianceTable;
use crate::msa::{DistanceHistogram, Msa};
use crate::rng::{sha256_hex, stream_rng};
use crate::stats::pearson;

/// Schema tag for serialized metric reports.
pub const METRIC_REPORT_VERSION: &str = "metric-1";

/// Pearson correlation over the flattened vectors of all pair/residue
/// covariance entries. No entries are excluded, including near-zero ones.
pub fn covariance_correlation(a: &CovarianceTable, b: &CovarianceTable) -> Result<f64> {
    if a.l() != b.l() || a.q() != b.q() {
        return Err(Error::DimensionMismatch(format!(
            "covariance tables have shapes (L={}, q={}) and (L={}, q={})",
            a.l(),
            a.q(),
            b.l(),
            b.q()
        )));
    }
    pearson(&a.flatten(), &b.flatten())
}

/// Pearson correlation between paired per-sequence energies. Affine
/// transformations of either vector leave the result unchanged.
pub fn energy_correlation(target: &[f64], model: &[f64]) -> Result<f64> {
    if target.len() != model.len() {
        return Err(Error::DimensionMismatch(format!(
            "energy vectors have lengths {} and {}",
            target.len(),
            model.len()
        )));
    }
    if target.len() < 3 {
        return Err(Error::InvalidArgument(
            "energy correlation needs at least 3 sequences".into(),
        ));
    }
    pearson(target, model)
}

/// Total variation distance between two pairwise-distance distributions,
/// one half the L1 distance of the normalized histograms. 0 for identical
/// distributions, 1 for disjoint support.
pub fn hamming_tvd(a: &DistanceHistogram, b: &DistanceHistogram) -> Result<f64> {
    if a.seq_len() != b.seq_len() {
        return Err(Error::DimensionMismatch(format!(
            "distance histograms cover lengths {} and {}",
            a.seq_len(),
            b.seq_len()
        )));
    }
    let fa = a.normalized();
    let fb = b.normalized();
    let l1: f64 = fa.iter().zip(&fb).map(|(x, y)| (x - y).abs()).sum();
    Ok((0.5 * l1).clamp(0.0, 1.0))
}

/// A distance histogram rescaled for shape comparison: distances divided by
/// the modal distance, frequencies divided by the peak frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledHistogram {
    /// One (distance / mode, frequency / peak) entry per bin, zero-frequency
    /// bins included. When `degenerate` is set the first component is the
    /// raw distance instead.
    pub rows: Vec<(f64, f64)>,
    /// Smallest distance achieving the maximum frequency.
    pub mode_distance: usize,
    /// True when the modal distance is zero, which leaves nothing to divide
    /// the distance axis by; `rows` then carries raw distances.
    pub degenerate: bool,
}

impl RescaledHistogram {
    /// Rows usable on log-log axes. Both coordinates must be positive there,
    /// so zero-frequency bins and the zero-distance bin have no image.
    pub fn log_plot_rows(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .copied()
            .filter(|&(x, y)| x > 0.0 && y > 0.0)
            .collect()
    }

    /// CSV table with one row per distance bin.
    pub fn to_csv(&self) -> String {
        let header = if self.degenerate {
            "distance,frequency_ratio\n"
        } else {
            "distance_ratio,frequency_ratio\n"
        };
        let mut out = String::from(header);
        for &(x, y) in &self.rows {
            out.push_str(&format!("{x},{y}\n"));
        }
        out
    }
}

/// Rescales a distance histogram by its mode and peak so distributions of
/// different widths and heights can be overlaid.
///
/// The mode is the smallest distance achieving the maximum frequency, a
/// deterministic tie-break. A modal distance of zero cannot scale the
/// distance axis; the table is then emitted with raw distances and flagged.
pub fn rescale_loglog(hist: &DistanceHistogram) -> Result<RescaledHistogram> {
    if hist.counts.is_empty() || hist.total_pairs == 0 {
        return Err(Error::InvalidArgument(
            "cannot rescale an empty distance histogram".into(),
        ));
    }
    let freqs = hist.normalized();
    let mut mode = 0usize;
    for (d, &f) in freqs.iter().enumerate() {
        if f > freqs[mode] {
            mode = d;
        }
    }
    let peak = freqs[mode];
    let degenerate = mode == 0;
    let rows = freqs
        .iter()
        .enumerate()
        .map(|(d, &f)| {
            let x = if degenerate {
                d as f64
            } else {
                d as f64 / mode as f64
            };
            (x, f / peak)
        })
        .collect();
    Ok(RescaledHistogram {
        rows,
        mode_distance: mode,
        degenerate,
    })
}

/// Size multiplier that moves the expected covariance correlation from
/// `rho0` to `rho_target` under the finite-sampling error law: the quantity
/// N (1 - rho^2) / rho^2 stays invariant as the alignment grows.
fn extrapolation_factor(rho0: f64, rho_target: f64) -> Result<f64> {
    for (name, r) in [("rho0", rho0), ("rho_target", rho_target)] {
        if !(r > 0.0) || r >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "{name} = {r} lies outside (0, 1); the required size diverges \
                 as the correlation approaches 1"
            )));
        }
    }
    let signal = |r: f64| r * r / (1.0 - r * r);
    Ok(signal(rho_target) / signal(rho0))
}

/// Alignment size needed to raise the expected covariance correlation from
/// `rho0` (observed with `n0` sequences) to `rho_target`, rounded up.
pub fn extrapolate_msa_size(n0: u64, rho0: f64, rho_target: f64) -> Result<u64> {
    if n0 == 0 {
        return Err(Error::InvalidArgument("n0 must be positive".into()));
    }
    let factor = extrapolation_factor(rho0, rho_target)?;
    Ok((n0 as f64 * factor).ceil() as u64)
}

/// Per-order summary within an [`R20Report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R20Order {
    pub order: usize,
    /// Mean Pearson over the non-skipped sets, `None` when every set at this
    /// order was skipped.
    pub mean_pearson: Option<f64>,
    pub sets_used: usize,
    pub sets_skipped: usize,
}

/// Result of the higher-order marginal comparison.
///
/// At each order, `sets_used + sets_skipped` equals the number of position
/// sets evaluated: `sets_requested`, except when the alignment admits fewer
/// distinct sets than requested, in which case all of them are enumerated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R20Report {
    pub orders: Vec<R20Order>,
    pub max_order: usize,
    pub sets_requested: usize,
    pub top_k: usize,
    pub seed: u64,
    pub target_rows: usize,
    pub eval_rows: usize,
}

impl R20Report {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(Error::from)
    }

    pub fn from_json(text: &str) -> Result<R20Report> {
        serde_json::from_str(text).map_err(Error::from)
    }

    /// CSV curve: one row per order. A fully skipped order leaves the mean
    /// field empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("order,mean_pearson,sets_used,sets_skipped\n");
        for o in &self.orders {
            let mean = o.mean_pearson.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                o.order, mean, o.sets_used, o.sets_skipped
            ));
        }
        out
    }
}

/// Higher-order marginal score between a target and an evaluation alignment.
///
/// For each order n in [2, max_order], position sets of size n are drawn
/// uniformly without replacement (all sets are enumerated when fewer than
/// `sets_per_order` exist). Within a set, subsequences are ranked by target
/// frequency with ties broken lexicographically on the symbol codes, the
/// `top_k` most frequent are kept (fewer when fewer distinct subsequences
/// occur), and the Pearson correlation between their target and evaluation
/// frequencies is averaged over sets. Sets with fewer than two distinct
/// target subsequences, or where either frequency vector is constant, are
/// skipped and counted.
pub fn r20(
    target: &Msa,
    eval: &Msa,
    max_order: usize,
    sets_per_order: usize,
    top_k: usize,
    seed: u64,
) -> Result<R20Report> {
    let l = target.seq_len();
    let q = target.alphabet().q();
    if eval.seq_len() != l || eval.alphabet().q() != q {
        return Err(Error::DimensionMismatch(format!(
            "alignments have shapes (L={}, q={}) and (L={}, q={})",
            l,
            q,
            eval.seq_len(),
            eval.alphabet().q()
        )));
    }
    if max_order < 2 || max_order > l {
        return Err(Error::InvalidArgument(format!(
            "max_order must lie in [2, L={l}], got {max_order}"
        )));
    }
    if sets_per_order == 0 {
        return Err(Error::InvalidArgument(
            "sets_per_order must be at least 1".into(),
        ));
    }
    if top_k < 2 {
        return Err(Error::InvalidArgument(
            "top_k must be at least 2; a Pearson correlation needs two points".into(),
        ));
    }
    let mut orders = Vec::with_capacity(max_order - 1);
    for n in 2..=max_order {
        if !radix_capacity_ok(q, n) {
            return Err(Error::InvalidArgument(format!(
                "order {n} subsequences over {q} symbols exceed the 128-bit \
                 frequency key"
            )));
        }
        let sets = position_sets(l, n, sets_per_order, seed);
        // Sets are scored in parallel but reduced in set-index order, so the
        // mean is bit-stable regardless of thread scheduling.
        let scores: Vec<Option<f64>> = sets
            .par_iter()
            .map(|set| set_score(target, eval, set, q, top_k))
            .collect();
        let mut used = 0usize;
        let mut sum = 0.0;
        for score in &scores {
            if let Some(v) = score {
                used += 1;
                sum += v;
            }
        }
        orders.push(R20Order {
            order: n,
            mean_pearson: (used > 0).then(|| sum / used as f64),
            sets_used: used,
            sets_skipped: scores.len() - used,
        });
    }
    Ok(R20Report {
        orders,
        max_order,
        sets_requested: sets_per_order,
        top_k,
        seed,
        target_rows: target.n_seqs(),
        eval_rows: eval.n_seqs(),
    })
}

/// True when q^n fits the u128 subsequence key.
fn radix_capacity_ok(q: usize, n: usize) -> bool {
    let mut acc: u128 = 1;
    for _ in 0..n {
        match acc.checked_mul(q as u128) {
            Some(v) => acc = v,
            None => return false,
        }
    }
    true
}

/// C(l, k), capped: any value above `cap` is reported as `cap + 1`.
fn n_choose_k_capped(l: u64, k: u64, cap: u64) -> u64 {
    if k > l {
        return 0;
    }
    let k = k.min(l - k);
    let mut acc: u128 = 1;
    for t in 0..k {
        // exact at every step: the running value is C(l, t + 1)
        acc = acc * (l - t) as u128 / (t + 1) as u128;
        if acc > cap as u128 {
            return cap + 1;
        }
    }
    acc as u64
}

/// All size-n subsets of 0..l in lexicographic order.
fn enumerate_subsets(l: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut c: Vec<usize> = (0..n).collect();
    loop {
        out.push(c.clone());
        let mut i = n;
        while i > 0 && c[i - 1] == l - n + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        c[i - 1] += 1;
        for t in i..n {
            c[t] = c[t - 1] + 1;
        }
    }
}

/// Distinct sorted position sets of size n: exhaustive when few enough
/// exist, otherwise uniform rejection sampling from a per-order stream.
fn position_sets(l: usize, n: usize, requested: usize, seed: u64) -> Vec<Vec<usize>> {
    if n_choose_k_capped(l as u64, n as u64, requested as u64) <= requested as u64 {
        return enumerate_subsets(l, n);
    }
    let mut rng = stream_rng(seed, n as u64);
    let mut seen: HashSet<Vec<usize>> = HashSet::with_capacity(requested);
    let mut out = Vec::with_capacity(requested);
    while out.len() < requested {
        let mut set = rand::seq::index::sample(&mut rng, l, n).into_vec();
        set.sort_unstable();
        if seen.insert(set.clone()) {
            out.push(set);
        }
    }
    out
}

/// Big-endian radix keys for each row restricted to `set`: the first
/// position is most significant, so numeric order equals lexicographic
/// order on the symbol codes.
fn subsequence_keys(msa: &Msa, set: &[usize], q: usize) -> Vec<u128> {
    (0..msa.n_seqs())
        .map(|r| {
            let row = msa.row(r);
            set.iter()
                .fold(0u128, |key, &p| key * q as u128 + row[p] as u128)
        })
        .collect()
}

/// Sorts keys and run-length encodes them into (key, count) pairs in
/// ascending key order.
fn run_counts(mut keys: Vec<u128>) -> Vec<(u128, u64)> {
    keys.sort_unstable();
    let mut runs: Vec<(u128, u64)> = Vec::new();
    for k in keys {
        match runs.last_mut() {
            Some((prev, c)) if *prev == k => *c += 1,
            _ => runs.push((k, 1)),
        }
    }
    runs
}

fn count_in_sorted(sorted: &[u128], key: u128) -> u64 {
    let lo = sorted.partition_point(|&x| x < key);
    let hi = sorted.partition_point(|&x| x <= key);
    (hi - lo) as u64
}

/// Scores one position set; `None` marks a skipped set.
fn set_score(target: &Msa, eval: &Msa, set: &[usize], q: usize, top_k: usize) -> Option<f64> {
    let mut runs = run_counts(subsequence_keys(target, set, q));
    if runs.len() < 2 {
        return None;
    }
    // Stable sort by count keeps the ascending-key order within ties, which
    // is exactly the lexicographic tie-break.
    runs.sort_by(|a, b| b.1.cmp(&a.1));
    runs.truncate(top_k);
    let mut eval_keys = subsequence_keys(eval, set, q);
    eval_keys.sort_unstable();
    let nt = target.n_seqs() as f64;
    let ne = eval.n_seqs() as f64;
    let ft: Vec<f64> = runs.iter().map(|&(_, c)| c as f64 / nt).collect();
    let fe: Vec<f64> = runs
        .iter()
        .map(|&(k, _)| count_in_sorted(&eval_keys, k) as f64 / ne)
        .collect();
    pearson(&ft, &fe).ok()
}

/// A scalar or vector metric outcome. Vector entries are optional so an
/// undefined element (such as a fully skipped r20 order) serializes as null
/// instead of a sentinel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricValue {
    Scalar(f64),
    Vector(Vec<Option<f64>>),
}

/// A named input and its content hash, tying a report to exact inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFingerprint {
    pub name: String,
    pub sha256: String,
}

impl InputFingerprint {
    pub fn of_msa(name: &str, msa: &Msa) -> InputFingerprint {
        InputFingerprint {
            name: name.to_string(),
            sha256: msa.content_hash(),
        }
    }

    pub fn of_bytes(name: &str, bytes: &[u8]) -> InputFingerprint {
        InputFingerprint {
            name: name.to_string(),
            sha256: sha256_hex(bytes),
        }
    }
}

/// Self-describing record of one metric evaluation: what was measured, on
/// which inputs (by content hash), and under which seed. The timestamp is
/// optional so byte-identical reruns stay possible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub version: String,
    pub metric: String,
    pub result: MetricValue,
    pub inputs: Vec<InputFingerprint>,
    pub seed: u64,
    pub timestamp: Option<String>,
}

impl MetricReport {
    pub fn new(
        metric: &str,
        result: MetricValue,
        inputs: Vec<InputFingerprint>,
        seed: u64,
    ) -> MetricReport {
        MetricReport {
            version: METRIC_REPORT_VERSION.to_string(),
            metric: metric.to_string(),
            result,
            inputs,
            seed,
            timestamp: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(Error::from)
    }

    pub fn from_json(text: &str) -> Result<MetricReport> {
        let report: MetricReport = serde_json::from_str(text)?;
        if report.version != METRIC_REPORT_VERSION {
            return Err(Error::ModelFormat(format!(
                "expected report version '{METRIC_REPORT_VERSION}', found '{}'",
                report.version
            )));
        }
        Ok(report)
    }

    /// CSV rows, one per result element; a scalar occupies index 0 and an
    /// undefined vector element leaves its value field empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,index,value\n");
        match &self.result {
            MetricValue::Scalar(v) => {
                out.push_str(&format!("{},0,{v}\n", self.metric));
            }
            MetricValue::Vector(vs) => {
                for (i, v) in vs.iter().enumerate() {
                    let val = v.map(|x| x.to_string()).unwrap_or_default();
                    out.push_str(&format!("{},{i},{val}\n", self.metric));
                }
            }
        }
        out
    }
}
