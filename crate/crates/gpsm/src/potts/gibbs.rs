//! Multi-chain single-site Gibbs sampler.
//!
//! Chains are fully independent with RNG streams derived from (seed, chain
//! index), so chain-level parallelism is bit-deterministic. Burn-in is
//! adaptive: the energy trace of chain 0 must pass a two-sample location
//! test across its two halves, otherwise the burn-in doubles up to a cap.

use super::PottsParams;
use crate::error::{Error, Result};
use crate::msa::Msa;
use crate::rng::stream_rng;
use crate::stats::welch_p_value;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Burn-in passes when the two halves of the chain-0 energy trace agree at
/// this significance level.
const EQUILIBRATION_P: f64 = 0.05;
/// Burn-in stops doubling at this multiple of the requested sweeps.
const BURN_IN_CAP_FACTOR: usize = 16;

/// Flattened parameters laid out for fast conditional evaluation.
///
/// `w[((i*L + j)*q + b)*q + a]` is the coupling felt by site i in state a
/// when site j is in state b; the innermost index is contiguous in a so a
/// site update reads q consecutive values per neighbor.
pub(crate) struct GibbsEngine {
    l: usize,
    q: usize,
    h: Vec<f64>,
    w: Vec<f64>,
}

impl GibbsEngine {
    pub(crate) fn new(params: &PottsParams) -> Self {
        let l = params.l();
        let q = params.q();
        let mut engine = GibbsEngine {
            l,
            q,
            h: vec![0.0; l * q],
            w: vec![0.0; l * l * q * q],
        };
        let j_flat: Vec<f64> = params
            .couplings()
            .iter()
            .flat_map(|t| t.iter().cloned())
            .collect();
        let h_flat: Vec<f64> = params.h().iter().cloned().collect();
        engine.set_params(&h_flat, &j_flat);
        engine
    }

    /// Rebuilds the flattened tables from raw parameter vectors
    /// (h row-major L×q, j pair-major q×q row-major).
    pub(crate) fn set_params(&mut self, h: &[f64], j: &[f64]) {
        let (l, q) = (self.l, self.q);
        debug_assert_eq!(h.len(), l * q);
        debug_assert_eq!(j.len(), l * (l - 1) / 2 * q * q);
        self.h.copy_from_slice(h);
        self.w.fill(0.0);
        let mut pair = 0usize;
        for i in 0..l {
            for jj in (i + 1)..l {
                let base = pair * q * q;
                for a in 0..q {
                    for b in 0..q {
                        let v = j[base + a * q + b];
                        // site i in state a, neighbor jj in state b
                        self.w[((i * l + jj) * q + b) * q + a] = v;
                        // site jj in state b, neighbor i in state a
                        self.w[((jj * l + i) * q + a) * q + b] = v;
                    }
                }
                pair += 1;
            }
        }
    }

    pub(crate) fn l(&self) -> usize {
        self.l
    }

    pub(crate) fn q(&self) -> usize {
        self.q
    }

    /// One full sweep: every site resampled once from its conditional.
    /// `cond` is a scratch buffer of length q.
    pub(crate) fn sweep(&self, state: &mut [u8], rng: &mut ChaCha8Rng, cond: &mut [f64]) {
        let (l, q) = (self.l, self.q);
        for i in 0..l {
            cond.copy_from_slice(&self.h[i * q..(i + 1) * q]);
            for j in 0..l {
                if j == i {
                    continue;
                }
                let base = ((i * l + j) * q + state[j] as usize) * q;
                let row = &self.w[base..base + q];
                for (c, &v) in cond.iter_mut().zip(row) {
                    *c += v;
                }
            }
            // conditional p(a) ∝ exp(-e_a), stabilized by the minimum energy
            let emin = cond.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut z = 0.0;
            for c in cond.iter_mut() {
                *c = (emin - *c).exp();
                z += *c;
            }
            let target = rng.random::<f64>() * z;
            let mut acc = 0.0;
            let mut chosen = q - 1;
            for (a, &p) in cond.iter().enumerate() {
                acc += p;
                if target < acc {
                    chosen = a;
                    break;
                }
            }
            state[i] = chosen as u8;
        }
    }

    /// E(S) under the current parameters (same convention as potts_energy).
    pub(crate) fn energy(&self, state: &[u8]) -> f64 {
        let (l, q) = (self.l, self.q);
        let mut e = 0.0;
        for (i, &si) in state.iter().enumerate() {
            e += self.h[i * q + si as usize];
        }
        for i in 0..l {
            for j in (i + 1)..l {
                e += self.w[((i * l + j) * q + state[j] as usize) * q + state[i] as usize];
            }
        }
        e
    }

    /// Fresh uniform state for a numbered chain.
    pub(crate) fn init_state(&self, rng: &mut ChaCha8Rng) -> Vec<u8> {
        (0..self.l)
            .map(|_| rng.random_range(0..self.q as u8))
            .collect()
    }

    /// Runs the adaptive burn-in schedule on one chain, returning the total
    /// sweeps spent. Used for chain 0; the other chains then burn the same
    /// number of sweeps without the test.
    fn adaptive_burn_in(&self, state: &mut [u8], rng: &mut ChaCha8Rng, requested: usize) -> usize {
        let cap = requested * BURN_IN_CAP_FACTOR;
        let mut cond = vec![0.0; self.q];
        let mut trace: Vec<f64> = Vec::with_capacity(requested * 2);
        let mut run = |n: usize, trace: &mut Vec<f64>, state: &mut [u8], rng: &mut ChaCha8Rng| {
            for _ in 0..n {
                self.sweep(state, rng, &mut cond);
                trace.push(self.energy(state));
            }
        };
        run(requested, &mut trace, state, rng);
        loop {
            let half = trace.len() / 2;
            if welch_p_value(&trace[..half], &trace[half..]) > EQUILIBRATION_P {
                break;
            }
            if trace.len() >= cap {
                break;
            }
            let more = trace.len();
            run(more, &mut trace, state, rng);
        }
        trace.len()
    }
}

/// Draws n sequences from a Potts model by multi-chain Gibbs sampling.
///
/// Chains start from independent uniform sequences; after burn-in, each
/// chain yields one sequence every `thin_sweeps`, collected round-robin
/// across chains until n rows exist. Deterministic given seed.
pub fn gibbs_sample(
    params: &PottsParams,
    n: usize,
    n_chains: usize,
    burn_in_sweeps: usize,
    thin_sweeps: usize,
    seed: u64,
) -> Result<Msa> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    if n_chains == 0 {
        return Err(Error::InvalidArgument("need at least one chain".into()));
    }
    if burn_in_sweeps == 0 || thin_sweeps == 0 {
        return Err(Error::InvalidArgument(
            "burn-in and thinning must be >= 1 sweep".into(),
        ));
    }
    let engine = GibbsEngine::new(params);
    let l = engine.l();

    let mut rngs: Vec<ChaCha8Rng> = (0..n_chains).map(|c| stream_rng(seed, c as u64)).collect();
    let mut states: Vec<Vec<u8>> = rngs.iter_mut().map(|r| engine.init_state(r)).collect();

    // chain 0 decides the effective burn-in
    let total_burn_in = engine.adaptive_burn_in(&mut states[0], &mut rngs[0], burn_in_sweeps);
    states[1..]
        .par_iter_mut()
        .zip(rngs[1..].par_iter_mut())
        .for_each(|(state, rng)| {
            let mut cond = vec![0.0; engine.q()];
            for _ in 0..total_burn_in {
                engine.sweep(state, rng, &mut cond);
            }
        });

    // emission: chain c produces rows c, c + n_chains, c + 2*n_chains, ...
    let per_chain: Vec<usize> = (0..n_chains)
        .map(|c| if c < n { (n - c - 1) / n_chains + 1 } else { 0 })
        .collect();
    let chain_rows: Vec<Vec<u8>> = states
        .par_iter_mut()
        .zip(rngs.par_iter_mut())
        .zip(per_chain.par_iter())
        .map(|((state, rng), &emissions)| {
            let mut cond = vec![0.0; engine.q()];
            let mut rows = Vec::with_capacity(emissions * l);
            for _ in 0..emissions {
                for _ in 0..thin_sweeps {
                    engine.sweep(state, rng, &mut cond);
                }
                rows.extend_from_slice(state);
            }
            rows
        })
        .collect();

    let mut data = Array2::zeros((n, l));
    for t in 0..n {
        let chain = t % n_chains;
        let emission = t / n_chains;
        let row = &chain_rows[chain][emission * l..(emission + 1) * l];
        data.row_mut(t)
            .as_slice_mut()
            .expect("row is contiguous")
            .copy_from_slice(row);
    }
    let ids = (0..n).map(|t| format!("s{t}")).collect();
    Msa::from_codes(data, params.alphabet().clone(), ids)
}

#[cfg(test)]
mod tests {
    use super::super::tests::random_params;
    use super::super::{potts_energy, PottsParams};
    use super::*;
    use crate::alphabet::Alphabet;
    use crate::marginals::{bivariate_marginals, pairs, univariate_marginals};

    #[test]
    fn zero_model_samples_uniform_marginals() {
        let params = PottsParams::zero(3, Alphabet::from_spec("ABC").unwrap()).unwrap();
        let n = 30_000;
        let msa = gibbs_sample(&params, n, 64, 20, 2, 11).unwrap();
        let uni = univariate_marginals(&msa, 0.0).unwrap();
        let se = (1.0 / 3.0 * (2.0 / 3.0) / n as f64).sqrt();
        for i in 0..3 {
            for a in 0..3 {
                let diff = (uni.row(i)[a] - 1.0 / 3.0).abs();
                assert!(diff <= 4.0 * se, "marginal ({i},{a}) off by {diff}");
            }
        }
    }

    #[test]
    fn sampler_matches_exhaustive_enumeration_within_4_se() {
        let params = random_params(4, "ABC", 1.0, 21);
        let (l, q) = (4usize, 3usize);

        // exact marginals by enumeration over all 81 sequences
        let mut probs = Vec::with_capacity(81);
        let mut seqs = Vec::with_capacity(81);
        for idx in 0..q.pow(l as u32) {
            let mut rem = idx;
            let seq: Vec<u8> = (0..l)
                .map(|_| {
                    let s = (rem % q) as u8;
                    rem /= q;
                    s
                })
                .collect();
            probs.push((-potts_energy(&params, &seq).unwrap()).exp());
            seqs.push(seq);
        }
        let z: f64 = probs.iter().sum();
        let mut exact_uni = vec![0.0; l * q];
        let mut exact_bi = vec![0.0; 6 * q * q];
        for (p, seq) in probs.iter().zip(&seqs) {
            let p = p / z;
            for (i, &a) in seq.iter().enumerate() {
                exact_uni[i * q + a as usize] += p;
            }
            for (pair, (i, j)) in pairs(l).enumerate() {
                exact_bi[pair * q * q + seq[i] as usize * q + seq[j] as usize] += p;
            }
        }

        let n = 100_000;
        let msa = gibbs_sample(&params, n, 200, 50, 3, 33).unwrap();
        let uni = univariate_marginals(&msa, 0.0).unwrap();
        let bi = bivariate_marginals(&msa, 0.0).unwrap();
        for i in 0..l {
            for a in 0..q {
                let f = exact_uni[i * q + a];
                let se = (f * (1.0 - f) / n as f64).sqrt();
                let diff = (uni.row(i)[a] - f).abs();
                assert!(
                    diff <= 4.0 * se + 1e-12,
                    "univariate ({i},{a}): {diff} > {}",
                    4.0 * se
                );
            }
        }
        for (pair, (i, j)) in pairs(l).enumerate() {
            let table = bi.pair(i, j).unwrap();
            for a in 0..q {
                for b in 0..q {
                    let f = exact_bi[pair * q * q + a * q + b];
                    let se = (f * (1.0 - f) / n as f64).sqrt();
                    let diff = (table[(a, b)] - f).abs();
                    assert!(
                        diff <= 4.0 * se + 1e-12,
                        "bivariate ({i},{j},{a},{b}): {diff} > {}",
                        4.0 * se
                    );
                }
            }
        }
    }

    #[test]
    fn same_seed_reproduces_sampled_msa() {
        let params = random_params(5, "AB", 0.7, 3);
        let a = gibbs_sample(&params, 500, 7, 10, 2, 99).unwrap();
        let b = gibbs_sample(&params, 500, 7, 10, 2, 99).unwrap();
        assert_eq!(a, b);
        let c = gibbs_sample(&params, 500, 7, 10, 2, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn emission_is_round_robin_and_sizes_are_exact() {
        let params = PottsParams::zero(2, Alphabet::from_spec("AB").unwrap()).unwrap();
        let msa = gibbs_sample(&params, 13, 5, 5, 1, 1).unwrap();
        assert_eq!(msa.n_seqs(), 13);
        assert_eq!(msa.seq_len(), 2);
        assert!(gibbs_sample(&params, 0, 5, 5, 1, 1).is_err());
        assert!(gibbs_sample(&params, 5, 5, 0, 1, 1).is_err());
    }
}
