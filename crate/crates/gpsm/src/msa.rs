//! Alignment container, FASTA/JSON ingestion, filtering, and splitting.

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::rng::sha256_hex;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Schema tag for the JSON alignment container.
pub const MSA_JSON_VERSION: &str = "msa-1";

/// An N×L alignment of residue codes over a fixed alphabet.
///
/// Rows are sequences, columns are positions; every entry is < q. Immutable
/// after construction and safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Msa {
    data: Array2<u8>,
    alphabet: Alphabet,
    ids: Vec<String>,
}

impl Msa {
    /// Builds an alignment from raw codes, validating shape and code range.
    pub fn from_codes(data: Array2<u8>, alphabet: Alphabet, ids: Vec<String>) -> Result<Self> {
        let (n, l) = data.dim();
        if n == 0 || l == 0 {
            return Err(Error::EmptyAlignment);
        }
        if ids.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} ids for {} rows",
                ids.len(),
                n
            )));
        }
        let q = alphabet.q() as u8;
        if let Some(&bad) = data.iter().find(|&&c| c >= q) {
            return Err(Error::InvalidArgument(format!(
                "residue code {bad} out of range for q={q}"
            )));
        }
        Ok(Msa {
            data,
            alphabet,
            ids,
        })
    }

    /// Number of sequences N.
    pub fn n_seqs(&self) -> usize {
        self.data.nrows()
    }

    /// Alignment length L.
    pub fn seq_len(&self) -> usize {
        self.data.ncols()
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// One row as a contiguous code slice.
    pub fn row(&self, r: usize) -> &[u8] {
        let l = self.seq_len();
        &self.as_flat()[r * l..(r + 1) * l]
    }

    /// The full matrix, row-major.
    pub fn as_flat(&self) -> &[u8] {
        self.data
            .as_slice()
            .expect("alignment storage is row-major contiguous")
    }

    pub fn data(&self) -> &Array2<u8> {
        &self.data
    }

    /// Decoded string form of one row.
    pub fn row_string(&self, r: usize) -> String {
        self.alphabet
            .decode_seq(self.row(r))
            .expect("stored codes are in range")
    }

    /// Content fingerprint over dimensions, alphabet, and row data.
    /// Sequence ids are deliberately excluded: two alignments with the same
    /// residues are the same input regardless of labeling.
    pub fn content_hash(&self) -> String {
        let mut buf = Vec::with_capacity(self.as_flat().len() + 64);
        buf.extend_from_slice(b"msa");
        buf.extend_from_slice(&(self.n_seqs() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.seq_len() as u64).to_le_bytes());
        buf.extend_from_slice(self.alphabet.symbols().as_bytes());
        buf.push(self.alphabet.gap_code().unwrap_or(0xff));
        buf.extend_from_slice(self.as_flat());
        sha256_hex(&buf)
    }

    /// Parses FASTA text ('>' headers, single- or multi-line sequences).
    ///
    /// Characters outside the alphabet map to the gap code. Errors name the
    /// first record whose length disagrees with the first record.
    pub fn parse_fasta(text: &str, alphabet: &Alphabet) -> Result<Msa> {
        let mut ids: Vec<String> = Vec::new();
        let mut seqs: Vec<String> = Vec::new();
        for line in text.lines() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('>') {
                ids.push(header.trim().to_string());
                seqs.push(String::new());
            } else {
                match seqs.last_mut() {
                    Some(seq) => seq.push_str(line.trim()),
                    None => {
                        return Err(Error::Parse(
                            "sequence data before the first '>' header".into(),
                        ))
                    }
                }
            }
        }
        if ids.is_empty() {
            return Err(Error::EmptyAlignment);
        }
        let l = seqs[0].chars().count();
        if l == 0 {
            return Err(Error::RaggedAlignment {
                id: ids[0].clone(),
                expected: 1,
                found: 0,
            });
        }
        let mut data = Array2::zeros((ids.len(), l));
        for (r, (id, seq)) in ids.iter().zip(&seqs).enumerate() {
            let found = seq.chars().count();
            if found != l {
                return Err(Error::RaggedAlignment {
                    id: id.clone(),
                    expected: l,
                    found,
                });
            }
            let codes = alphabet.encode_seq(seq)?;
            for (c, code) in codes.into_iter().enumerate() {
                data[(r, c)] = code;
            }
        }
        Msa::from_codes(data, alphabet.clone(), ids)
    }

    /// Canonical FASTA rendering: one header line, one sequence line per row.
    pub fn to_fasta(&self) -> String {
        let mut out = String::with_capacity(self.n_seqs() * (self.seq_len() + 16));
        for r in 0..self.n_seqs() {
            out.push('>');
            out.push_str(&self.ids[r]);
            out.push('\n');
            out.push_str(&self.row_string(r));
            out.push('\n');
        }
        out
    }

    /// Serializes to the versioned JSON container.
    pub fn to_json(&self) -> Result<String> {
        let wire = MsaWire {
            version: MSA_JSON_VERSION.to_string(),
            alphabet: self.alphabet.clone(),
            ids: self.ids.clone(),
            rows: (0..self.n_seqs()).map(|r| self.row_string(r)).collect(),
        };
        Ok(serde_json::to_string_pretty(&wire)?)
    }

    /// Parses the versioned JSON container.
    pub fn from_json(text: &str) -> Result<Msa> {
        let wire: MsaWire = serde_json::from_str(text)?;
        if wire.version != MSA_JSON_VERSION {
            return Err(Error::ModelFormat(format!(
                "expected alignment container version '{MSA_JSON_VERSION}', found '{}'",
                wire.version
            )));
        }
        if wire.rows.is_empty() {
            return Err(Error::EmptyAlignment);
        }
        if wire.ids.len() != wire.rows.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} ids for {} rows",
                wire.ids.len(),
                wire.rows.len()
            )));
        }
        let l = wire.rows[0].chars().count();
        let mut data = Array2::zeros((wire.rows.len(), l));
        for (r, row) in wire.rows.iter().enumerate() {
            let found = row.chars().count();
            if found != l {
                return Err(Error::RaggedAlignment {
                    id: wire.ids[r].clone(),
                    expected: l,
                    found,
                });
            }
            // Rows in the container must be in-alphabet exactly; silent gap
            // mapping is an ingestion concession only.
            for (c, ch) in row.chars().enumerate() {
                match wire.alphabet.code_of(ch) {
                    Some(code) => data[(r, c)] = code,
                    None => {
                        return Err(Error::Parse(format!(
                            "row '{}' contains {ch:?}, not in the alphabet",
                            wire.ids[r]
                        )))
                    }
                }
            }
        }
        Msa::from_codes(data, wire.alphabet, wire.ids)
    }

    /// Builds a new alignment from a subset of row indices (in given order).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Msa> {
        if rows.is_empty() {
            return Err(Error::EmptyAlignment);
        }
        let l = self.seq_len();
        let mut data = Array2::zeros((rows.len(), l));
        let mut ids = Vec::with_capacity(rows.len());
        for (out_r, &r) in rows.iter().enumerate() {
            if r >= self.n_seqs() {
                return Err(Error::InvalidArgument(format!(
                    "row index {r} out of range"
                )));
            }
            data.row_mut(out_r)
                .as_slice_mut()
                .expect("row is contiguous")
                .copy_from_slice(self.row(r));
            ids.push(self.ids[r].clone());
        }
        Msa::from_codes(data, self.alphabet.clone(), ids)
    }

    /// Greedy identity filtering in a seed-determined random order.
    ///
    /// A sequence is kept only if its fractional identity to every
    /// already-kept sequence is ≤ cutoff. Gap positions compare as ordinary
    /// symbols, so gap-gap counts as a match. Output order is kept-order.
    pub fn filter_by_identity(&self, cutoff: f64, seed: u64) -> Result<Msa> {
        if !(cutoff > 0.0 && cutoff < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "identity cutoff must be in (0,1), got {cutoff}"
            )));
        }
        let l = self.seq_len();
        // identity > cutoff  <=>  matches > cutoff*L  <=>  matches >= floor(cutoff*L)+1
        // equivalently mismatches <= L - that; track the mismatch budget.
        let max_matches = (cutoff * l as f64).floor() as usize;
        let mut order: Vec<usize> = (0..self.n_seqs()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let mut kept: Vec<usize> = Vec::new();
        for &candidate in &order {
            let cand_row = self.row(candidate);
            let mut ok = true;
            for &k in &kept {
                let kept_row = self.row(k);
                // early exit once identity can no longer exceed the cutoff
                let mismatch_budget = l - max_matches; // mismatches < budget => too similar
                let mut mismatches = 0usize;
                for (a, b) in cand_row.iter().zip(kept_row) {
                    if a != b {
                        mismatches += 1;
                        if mismatches >= mismatch_budget {
                            break;
                        }
                    }
                }
                let matches = l - mismatches.min(l);
                if matches as f64 / l as f64 > cutoff {
                    ok = false;
                    break;
                }
            }
            if ok {
                kept.push(candidate);
            }
        }
        self.select_rows(&kept)
    }

    /// Partitions a seed-determined row permutation into consecutive blocks
    /// of the requested sizes. Blocks are row-disjoint by construction.
    pub fn split_disjoint(&self, sizes: &[usize], seed: u64) -> Result<Vec<Msa>> {
        let requested: usize = sizes.iter().sum();
        if requested > self.n_seqs() {
            return Err(Error::InsufficientRows {
                requested,
                available: self.n_seqs(),
            });
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument(
                "split sizes must be positive".into(),
            ));
        }
        let mut order: Vec<usize> = (0..self.n_seqs()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let mut out = Vec::with_capacity(sizes.len());
        let mut start = 0usize;
        for &size in sizes {
            out.push(self.select_rows(&order[start..start + size])?);
            start += size;
        }
        Ok(out)
    }

    /// Hamming distance histogram over sequence pairs.
    ///
    /// `pair_budget = None` counts all N(N-1)/2 pairs; otherwise that many
    /// distinct pairs are sampled uniformly without replacement. A budget at
    /// or above the total pair count falls back to exact counting (flagged
    /// as clamped when it exceeded the total).
    pub fn hamming_distribution(
        &self,
        pair_budget: Option<u64>,
        seed: u64,
    ) -> Result<DistanceHistogram> {
        let n = self.n_seqs();
        if n < 2 {
            return Err(Error::InvalidArgument(
                "hamming distribution needs at least 2 sequences".into(),
            ));
        }
        let l = self.seq_len();
        let total = n as u64 * (n as u64 - 1) / 2;
        let mut counts = vec![0u64; l + 1];
        let mut clamped = false;
        let budget = match pair_budget {
            Some(b) if b == 0 => {
                return Err(Error::InvalidArgument(
                    "pair budget must be positive".into(),
                ))
            }
            Some(b) if b > total => {
                clamped = true;
                None
            }
            Some(b) if b == total => None,
            other => other,
        };
        match budget {
            None => {
                for i in 0..n {
                    let ri = self.row(i);
                    for j in (i + 1)..n {
                        counts[hamming(ri, self.row(j))] += 1;
                    }
                }
            }
            Some(b) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut seen: HashSet<(u32, u32)> = HashSet::with_capacity(b as usize);
                while (seen.len() as u64) < b {
                    let i = rng.random_range(0..n as u32);
                    let j = rng.random_range(0..n as u32);
                    if i == j {
                        continue;
                    }
                    let pair = (i.min(j), i.max(j));
                    if seen.insert(pair) {
                        counts[hamming(self.row(pair.0 as usize), self.row(pair.1 as usize))] += 1;
                    }
                }
            }
        }
        let total_pairs = counts.iter().sum();
        Ok(DistanceHistogram {
            counts,
            total_pairs,
            clamped,
        })
    }
}

fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

#[derive(Serialize, Deserialize)]
struct MsaWire {
    version: String,
    alphabet: Alphabet,
    ids: Vec<String>,
    rows: Vec<String>,
}

/// Exact integer histogram of pairwise Hamming distances.
///
/// Counts are kept as integers; normalization happens on demand so no
/// accumulation error is stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceHistogram {
    /// counts[d] = number of sampled pairs at distance d, for d in [0, L].
    pub counts: Vec<u64>,
    pub total_pairs: u64,
    /// True when a requested pair budget exceeded the available pair count
    /// and the computation fell back to exact enumeration.
    pub clamped: bool,
}

impl DistanceHistogram {
    /// Alignment length implied by the histogram support.
    pub fn seq_len(&self) -> usize {
        self.counts.len().saturating_sub(1)
    }

    /// Normalized frequency vector over d in [0, L]; sums to 1.
    pub fn normalized(&self) -> Vec<f64> {
        let t = self.total_pairs.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn arb_msa() -> impl Strategy<Value = Msa> {
        (2usize..6, 1usize..8).prop_flat_map(|(n, l)| {
            proptest::collection::vec(proptest::collection::vec(0u8..3, l), n).prop_map(
                move |rows| {
                    let alphabet = Alphabet::new("ABC", None).unwrap();
                    let mut data = Array2::zeros((rows.len(), l));
                    for (r, row) in rows.iter().enumerate() {
                        for (c, &code) in row.iter().enumerate() {
                            data[(r, c)] = code;
                        }
                    }
                    let ids = (0..rows.len()).map(|i| format!("s{i}")).collect();
                    Msa::from_codes(data, alphabet, ids).unwrap()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn fasta_roundtrip(msa in arb_msa()) {
            let text = msa.to_fasta();
            let back = Msa::parse_fasta(&text, msa.alphabet()).unwrap();
            prop_assert_eq!(back, msa);
        }

        #[test]
        fn filtered_output_has_no_pair_above_cutoff(msa in arb_msa(), seed in 0u64..32) {
            let cutoff = 0.5;
            let filtered = match msa.filter_by_identity(cutoff, seed) {
                Ok(f) => f,
                Err(Error::EmptyAlignment) => return Ok(()), // everything collided
                Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
            };
            let l = filtered.seq_len() as f64;
            for i in 0..filtered.n_seqs() {
                for j in (i + 1)..filtered.n_seqs() {
                    let matches = filtered
                        .row(i)
                        .iter()
                        .zip(filtered.row(j))
                        .filter(|(a, b)| a == b)
                        .count() as f64;
                    prop_assert!(matches / l <= cutoff);
                }
            }
        }
    }
}
