//! Univariate/bivariate frequency tables, covariances, and the three-body
//! covariance.
//!
//! Pseudocount convention: additive smoothing (count/N + pc)/(1 + K·pc) with
//! K = q for univariate tables, K = q² for bivariate, K = q³ for triplet
//! frequencies. Under this convention, marginalizing a bivariate table over
//! one axis equals the univariate table computed at pseudocount q·pc, which
//! is what makes every covariance block have exactly zero row and column
//! sums. Covariance computation therefore always pairs a bivariate table
//! with its own marginalized univariate table.

use crate::error::{Error, Result};
use crate::msa::Msa;
use ndarray::Array2;

/// Number of ordered position pairs (i < j).
pub fn pair_count(l: usize) -> usize {
    l * (l - 1) / 2
}

/// Lexicographic index of pair (i, j) with i < j.
pub fn pair_index(l: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < l);
    i * (2 * l - i - 1) / 2 + (j - i - 1)
}

/// Iterator over all (i, j) with i < j in lexicographic (pair-index) order.
pub fn pairs(l: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..l).flat_map(move |i| ((i + 1)..l).map(move |j| (i, j)))
}

/// L×q table of smoothed single-site frequencies. Rows sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateMarginals {
    freqs: Array2<f64>,
    pseudocount: f64,
    source_n: usize,
}

impl UnivariateMarginals {
    pub fn freqs(&self) -> &Array2<f64> {
        &self.freqs
    }

    pub fn l(&self) -> usize {
        self.freqs.nrows()
    }

    pub fn q(&self) -> usize {
        self.freqs.ncols()
    }

    pub fn pseudocount(&self) -> f64 {
        self.pseudocount
    }

    pub fn source_n(&self) -> usize {
        self.source_n
    }

    /// Frequencies at one position.
    pub fn row(&self, i: usize) -> &[f64] {
        self.freqs
            .row(i)
            .to_slice()
            .expect("marginal storage is contiguous")
    }

    /// CSV rendering with header (i, j, alpha, beta, value); j and beta are
    /// empty for single-site rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,alpha,beta,value\n");
        for i in 0..self.l() {
            for a in 0..self.q() {
                out.push_str(&format!("{i},,{a},,{}\n", self.freqs[(i, a)]));
            }
        }
        out
    }
}

/// Per-pair q×q tables of smoothed pair frequencies, pair-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariateMarginals {
    tables: Vec<Array2<f64>>,
    l: usize,
    pseudocount: f64,
    source_n: usize,
}

impl BivariateMarginals {
    pub fn l(&self) -> usize {
        self.l
    }

    pub fn q(&self) -> usize {
        self.tables[0].nrows()
    }

    pub fn pseudocount(&self) -> f64 {
        self.pseudocount
    }

    pub fn source_n(&self) -> usize {
        self.source_n
    }

    pub fn tables(&self) -> &[Array2<f64>] {
        &self.tables
    }

    /// Frequency table for pair (i, j), i < j.
    pub fn pair(&self, i: usize, j: usize) -> Result<&Array2<f64>> {
        if i >= j || j >= self.l {
            return Err(Error::InvalidArgument(format!(
                "pair ({i},{j}) invalid for L={}",
                self.l
            )));
        }
        Ok(&self.tables[pair_index(self.l, i, j)])
    }

    /// Univariate table obtained by marginalizing the pair tables; the
    /// result carries the matched pseudocount q·pc. Position i uses the
    /// first pair containing it, which is exact under the smoothing
    /// convention (any pair gives the same values up to float rounding).
    pub fn to_univariate(&self) -> UnivariateMarginals {
        let l = self.l;
        let q = self.q();
        let mut freqs = Array2::zeros((l, q));
        for i in 0..l {
            if i < l - 1 {
                let table = &self.tables[pair_index(l, i, i + 1)];
                for a in 0..q {
                    freqs[(i, a)] = table.row(a).sum();
                }
            } else {
                let table = &self.tables[pair_index(l, l - 2, l - 1)];
                for b in 0..q {
                    freqs[(i, b)] = table.column(b).sum();
                }
            }
        }
        UnivariateMarginals {
            freqs,
            pseudocount: self.pseudocount * q as f64,
            source_n: self.source_n,
        }
    }

    /// CSV rendering with header (i, j, alpha, beta, value).
    pub fn to_csv(&self) -> String {
        table_csv(&self.tables, self.l)
    }
}

/// Per-pair q×q covariance blocks C = f_pair − f_i ⊗ f_j.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceTable {
    values: Vec<Array2<f64>>,
    l: usize,
}

impl CovarianceTable {
    pub fn l(&self) -> usize {
        self.l
    }

    pub fn q(&self) -> usize {
        self.values[0].nrows()
    }

    pub fn tables(&self) -> &[Array2<f64>] {
        &self.values
    }

    pub fn pair(&self, i: usize, j: usize) -> Result<&Array2<f64>> {
        if i >= j || j >= self.l {
            return Err(Error::InvalidArgument(format!(
                "pair ({i},{j}) invalid for L={}",
                self.l
            )));
        }
        Ok(&self.values[pair_index(self.l, i, j)])
    }

    /// All entries flattened pair-major, row-major within pairs; the vector
    /// form used for covariance correlation.
    pub fn flatten(&self) -> Vec<f64> {
        let q = self.q();
        let mut out = Vec::with_capacity(self.values.len() * q * q);
        for table in &self.values {
            out.extend(table.iter());
        }
        out
    }

    pub fn to_csv(&self) -> String {
        table_csv(&self.values, self.l)
    }
}

fn table_csv(tables: &[Array2<f64>], l: usize) -> String {
    let mut out = String::from("i,j,alpha,beta,value\n");
    for ((i, j), table) in pairs(l).zip(tables) {
        let q = table.nrows();
        for a in 0..q {
            for b in 0..q {
                out.push_str(&format!("{i},{j},{a},{b},{}\n", table[(a, b)]));
            }
        }
    }
    out
}

/// Smoothed single-site frequencies: f = (count/N + pc)/(1 + q·pc).
pub fn univariate_marginals(msa: &Msa, pseudocount: f64) -> Result<UnivariateMarginals> {
    check_pseudocount(pseudocount)?;
    let n = msa.n_seqs();
    let l = msa.seq_len();
    let q = msa.alphabet().q();
    let mut counts = vec![0u32; l * q];
    for r in 0..n {
        for (i, &code) in msa.row(r).iter().enumerate() {
            counts[i * q + code as usize] += 1;
        }
    }
    let denom = 1.0 + q as f64 * pseudocount;
    let freqs = Array2::from_shape_fn((l, q), |(i, a)| {
        (counts[i * q + a] as f64 / n as f64 + pseudocount) / denom
    });
    Ok(UnivariateMarginals {
        freqs,
        pseudocount,
        source_n: n,
    })
}

/// Smoothed pair frequencies: f = (count/N + pc)/(1 + q²·pc).
pub fn bivariate_marginals(msa: &Msa, pseudocount: f64) -> Result<BivariateMarginals> {
    check_pseudocount(pseudocount)?;
    let l = msa.seq_len();
    if l < 2 {
        return Err(Error::InvalidArgument(
            "bivariate marginals need L >= 2".into(),
        ));
    }
    let n = msa.n_seqs();
    let q = msa.alphabet().q();
    let n_pairs = pair_count(l);
    let mut counts = vec![0u32; n_pairs * q * q];
    for r in 0..n {
        let row = msa.row(r);
        let mut idx = 0usize;
        for i in 0..l {
            let a = row[i] as usize;
            for j in (i + 1)..l {
                let b = row[j] as usize;
                counts[idx * q * q + a * q + b] += 1;
                idx += 1;
            }
        }
    }
    let denom = 1.0 + (q * q) as f64 * pseudocount;
    let tables = (0..n_pairs)
        .map(|p| {
            Array2::from_shape_fn((q, q), |(a, b)| {
                (counts[p * q * q + a * q + b] as f64 / n as f64 + pseudocount) / denom
            })
        })
        .collect();
    Ok(BivariateMarginals {
        tables,
        l,
        pseudocount,
        source_n: n,
    })
}

/// Covariance blocks C^{ij}_{ab} = f^{ij}_{ab} − f^i_a f^j_b.
///
/// The univariate table must follow the matched pseudocount convention of
/// the bivariate table (i.e. come from [`BivariateMarginals::to_univariate`]
/// or equal pseudocount q·pc); this is what guarantees zero row/column sums.
pub fn covariances(uni: &UnivariateMarginals, bi: &BivariateMarginals) -> Result<CovarianceTable> {
    if uni.l() != bi.l() || uni.q() != bi.q() {
        return Err(Error::DimensionMismatch(format!(
            "univariate ({}, {}) vs bivariate ({}, {})",
            uni.l(),
            uni.q(),
            bi.l(),
            bi.q()
        )));
    }
    let matched = bi.pseudocount * bi.q() as f64;
    if (uni.pseudocount - matched).abs() > 1e-12 * (1.0 + matched) {
        return Err(Error::InvalidArgument(format!(
            "univariate pseudocount {} does not match bivariate convention {}",
            uni.pseudocount, matched
        )));
    }
    let q = uni.q();
    let values = pairs(bi.l)
        .map(|(i, j)| {
            let table = &bi.tables[pair_index(bi.l, i, j)];
            Array2::from_shape_fn((q, q), |(a, b)| {
                table[(a, b)] - uni.freqs[(i, a)] * uni.freqs[(j, b)]
            })
        })
        .collect();
    Ok(CovarianceTable { values, l: bi.l })
}

/// Covariances of an alignment in one call, using the matched convention.
pub fn covariances_of(msa: &Msa, pseudocount: f64) -> Result<CovarianceTable> {
    let bi = bivariate_marginals(msa, pseudocount)?;
    covariances(&bi.to_univariate(), &bi)
}

/// Three-body covariance
/// C^{ijk}_{abc} = f^{ijk} − f^i C^{jk} − f^j C^{ik} − f^k C^{ij} − f^i f^j f^k,
/// with all frequencies smoothed under the matched convention
/// (denominator 1 + q³·pc throughout).
pub fn triplet_covariance(
    msa: &Msa,
    positions: (usize, usize, usize),
    residues: (u8, u8, u8),
    pseudocount: f64,
) -> Result<f64> {
    check_pseudocount(pseudocount)?;
    let (i, j, k) = positions;
    let l = msa.seq_len();
    if !(i < j && j < k) {
        return Err(Error::InvalidArgument(format!(
            "triplet positions must be strictly increasing, got ({i},{j},{k})"
        )));
    }
    if k >= l {
        return Err(Error::InvalidArgument(format!(
            "position {k} out of range for L={l}"
        )));
    }
    let q = msa.alphabet().q();
    let (a, b, c) = residues;
    if a as usize >= q || b as usize >= q || c as usize >= q {
        return Err(Error::InvalidArgument(format!(
            "residues ({a},{b},{c}) out of range for q={q}"
        )));
    }
    let n = msa.n_seqs() as f64;
    let mut c_i = 0u32;
    let mut c_j = 0u32;
    let mut c_k = 0u32;
    let mut c_ij = 0u32;
    let mut c_ik = 0u32;
    let mut c_jk = 0u32;
    let mut c_ijk = 0u32;
    for r in 0..msa.n_seqs() {
        let row = msa.row(r);
        let mi = row[i] == a;
        let mj = row[j] == b;
        let mk = row[k] == c;
        c_i += mi as u32;
        c_j += mj as u32;
        c_k += mk as u32;
        c_ij += (mi && mj) as u32;
        c_ik += (mi && mk) as u32;
        c_jk += (mj && mk) as u32;
        c_ijk += (mi && mj && mk) as u32;
    }
    let qf = q as f64;
    let denom = 1.0 + qf * qf * qf * pseudocount;
    let f1 = |count: u32| (count as f64 / n + qf * qf * pseudocount) / denom;
    let f2 = |count: u32| (count as f64 / n + qf * pseudocount) / denom;
    let f3 = (c_ijk as f64 / n + pseudocount) / denom;
    let (fi, fj, fk) = (f1(c_i), f1(c_j), f1(c_k));
    let cov_jk = f2(c_jk) - fj * fk;
    let cov_ik = f2(c_ik) - fi * fk;
    let cov_ij = f2(c_ij) - fi * fj;
    Ok(f3 - fi * cov_jk - fj * cov_ik - fk * cov_ij - fi * fj * fk)
}

fn check_pseudocount(pc: f64) -> Result<()> {
    if !(pc >= 0.0 && pc.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "pseudocount must be finite and >= 0, got {pc}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Alphabet;
    use approx::assert_abs_diff_eq;

    fn msa_from(rows: &[&str], symbols: &str) -> Msa {
        let alphabet = Alphabet::from_spec(symbols).unwrap();
        let fasta: String = rows
            .iter()
            .enumerate()
            .map(|(i, r)| format!(">s{i}\n{r}\n"))
            .collect();
        Msa::parse_fasta(&fasta, &alphabet).unwrap()
    }

    fn xor_msa() -> Msa {
        msa_from(&["AAA", "ABB", "BAB", "BBA"], "AB")
    }

    #[test]
    fn univariate_single_sequence_point_mass() {
        let msa = msa_from(&["AA"], "AB");
        let uni = univariate_marginals(&msa, 0.0).unwrap();
        assert_eq!(uni.row(0), &[1.0, 0.0]);
        assert_eq!(uni.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn univariate_pseudocount_formula() {
        // (1/1 + 0.5)/(1 + 2*0.5) = 0.75
        let msa = msa_from(&["AA"], "AB");
        let uni = univariate_marginals(&msa, 0.5).unwrap();
        assert_abs_diff_eq!(uni.row(0)[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(uni.row(0)[1], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn univariate_uniform_column() {
        let msa = msa_from(&["A", "B", "C"], "ABC");
        for pc in [0.0, 0.3, 2.0] {
            let uni = univariate_marginals(&msa, pc).unwrap();
            for a in 0..3 {
                assert_abs_diff_eq!(uni.row(0)[a], 1.0 / 3.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn univariate_rejects_negative_pseudocount() {
        let msa = msa_from(&["AA"], "AB");
        assert!(univariate_marginals(&msa, -0.1).is_err());
    }

    #[test]
    fn bivariate_anticorrelated_pair() {
        let msa = msa_from(&["AB", "BA"], "AB");
        let bi = bivariate_marginals(&msa, 0.0).unwrap();
        let t = bi.pair(0, 1).unwrap();
        assert_eq!(t[(0, 1)], 0.5);
        assert_eq!(t[(1, 0)], 0.5);
        assert_eq!(t[(0, 0)], 0.0);
        assert_eq!(t[(1, 1)], 0.0);
    }

    #[test]
    fn bivariate_requires_two_columns() {
        let msa = msa_from(&["A", "B"], "AB");
        assert!(bivariate_marginals(&msa, 0.0).is_err());
    }

    #[test]
    fn bivariate_tables_sum_to_one() {
        let msa = msa_from(&["ABA", "BAB", "AAB", "BBA"], "AB");
        for pc in [0.0, 0.25] {
            let bi = bivariate_marginals(&msa, pc).unwrap();
            for table in bi.tables() {
                assert_abs_diff_eq!(table.sum(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn marginalized_bivariate_matches_univariate_at_scaled_pseudocount() {
        let msa = msa_from(&["ABC", "BCA", "CCB", "AAB"], "ABC");
        let pc = 0.07;
        let bi = bivariate_marginals(&msa, pc).unwrap();
        let from_bi = bi.to_univariate();
        let direct = univariate_marginals(&msa, 3.0 * pc).unwrap();
        assert_abs_diff_eq!(from_bi.pseudocount(), direct.pseudocount(), epsilon = 1e-15);
        for i in 0..3 {
            for a in 0..3 {
                assert_abs_diff_eq!(from_bi.row(i)[a], direct.row(i)[a], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn xor_pairwise_covariances_vanish() {
        let cov = covariances_of(&xor_msa(), 0.0).unwrap();
        for table in cov.tables() {
            for &v in table.iter() {
                assert!(v.abs() < 1e-12, "covariance {v} should vanish");
            }
        }
    }

    #[test]
    fn coupled_pair_covariance_value() {
        // {AA, BB}: f_AA = 0.5, f_A = 0.5 at both sites -> C_AA = 0.25
        let msa = msa_from(&["AA", "BB", "AA", "BB"], "AB");
        let cov = covariances_of(&msa, 0.0).unwrap();
        let t = cov.pair(0, 1).unwrap();
        assert_abs_diff_eq!(t[(0, 0)], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(t[(0, 1)], -0.25, epsilon = 1e-15);
    }

    #[test]
    fn covariances_reject_mismatched_convention() {
        let msa = msa_from(&["ABA", "BAB"], "AB");
        let bi = bivariate_marginals(&msa, 0.1).unwrap();
        let unmatched = univariate_marginals(&msa, 0.1).unwrap();
        assert!(covariances(&unmatched, &bi).is_err());
        let wrong_dims = univariate_marginals(&msa_from(&["AB", "BA"], "AB"), 0.2).unwrap();
        assert!(covariances(&wrong_dims, &bi).is_err());
    }

    #[test]
    fn xor_triplet_covariance_is_one_eighth() {
        let c = triplet_covariance(&xor_msa(), (0, 1, 2), (0, 0, 0), 0.0).unwrap();
        assert_eq!(c, 0.125);
    }

    #[test]
    fn triplet_rejects_bad_positions() {
        let msa = xor_msa();
        assert!(triplet_covariance(&msa, (0, 0, 2), (0, 0, 0), 0.0).is_err());
        assert!(triplet_covariance(&msa, (1, 0, 2), (0, 0, 0), 0.0).is_err());
        assert!(triplet_covariance(&msa, (0, 1, 3), (0, 0, 0), 0.0).is_err());
        assert!(triplet_covariance(&msa, (0, 1, 2), (0, 0, 2), 0.0).is_err());
    }

    #[test]
    fn csv_headers_and_shapes() {
        let msa = msa_from(&["AB", "BA"], "AB");
        let uni = univariate_marginals(&msa, 0.0).unwrap();
        let csv = uni.to_csv();
        assert!(csv.starts_with("i,j,alpha,beta,value\n"));
        assert_eq!(csv.lines().count(), 1 + 2 * 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,,0,,"));

        let cov = covariances_of(&msa, 0.0).unwrap();
        let csv = cov.to_csv();
        assert_eq!(csv.lines().count(), 1 + 4);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,1,0,0,"));
    }
}
