//! Pairwise-model fitting by persistent-chain marginal matching.
//!
//! Each round advances a population of Gibbs chains under the current
//! parameters, estimates smoothed model marginals from the chain states,
//! and nudges parameters along the marginal residual, with the coupling
//! penalty applied as a separate proximal-style step. The estimate is
//! exponentially damped across rounds to suppress Monte-Carlo noise, and
//! the step size halves whenever the residual jumps well above its
//! previous value.

use super::gibbs::GibbsEngine;
use super::{scad_penalty, PottsParams};
use crate::error::{Error, Result};
use crate::marginals::{bivariate_marginals, pair_count};
use crate::msa::Msa;
use crate::rng::stream_rng;
use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Rounds of chain advancement run before the first update, in units of
/// steps_per_round, so the first marginal estimate is not dominated by the
/// uniform initial states.
const INITIAL_EQUILIBRATION_ROUNDS: usize = 8;
/// The step size halves when the residual exceeds this multiple of the
/// previous round's value; smaller jumps are within Monte-Carlo noise.
const RESIDUAL_JUMP_FACTOR: f64 = 1.25;
/// The step size never drops below this fraction of its starting value.
const MIN_STEP_FRACTION: f64 = 1e-3;

/// Settings for [`fit_potts`].
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Smoothing added to data and model marginals; None means 1/N of the
    /// training alignment.
    pub pseudocount: Option<f64>,
    /// Coupling penalty scale (must be positive).
    pub lambda: f64,
    /// Penalty taper width (must exceed 2).
    pub scad_a: f64,
    /// Initial gradient step size.
    pub step_size: f64,
    /// Damping of the running marginal estimate, in [0, 1): each round the
    /// estimate keeps this fraction of its previous value.
    pub damping: f64,
    /// Number of persistent Gibbs chains.
    pub n_chains: usize,
    /// Sweeps each chain advances per round.
    pub steps_per_round: usize,
    /// Maximum parameter-update rounds.
    pub max_rounds: usize,
    /// Convergence threshold on the sum of squared bivariate residuals.
    pub convergence_tol: f64,
    /// Master seed for the chain RNG streams.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            pseudocount: None,
            lambda: 1e-3,
            scad_a: 3.7,
            step_size: 0.6,
            damping: 0.6,
            n_chains: 16_384,
            steps_per_round: 16,
            max_rounds: 400,
            convergence_tol: 1e-3,
            seed: 0,
        }
    }
}

impl FitConfig {
    /// Rejects out-of-range settings before any compute starts.
    pub fn validate(&self) -> Result<()> {
        if let Some(pc) = self.pseudocount {
            if !(pc >= 0.0) || !pc.is_finite() {
                return Err(Error::InvalidArgument(
                    "pseudocount must be finite and non-negative".into(),
                ));
            }
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidArgument("lambda must be positive".into()));
        }
        if !(self.scad_a > 2.0) {
            return Err(Error::InvalidArgument("scad_a must exceed 2".into()));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::InvalidArgument("step_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidArgument("damping must lie in [0, 1)".into()));
        }
        if self.n_chains < 2 {
            return Err(Error::InvalidArgument("need at least two chains".into()));
        }
        if self.steps_per_round == 0 || self.max_rounds == 0 {
            return Err(Error::InvalidArgument(
                "steps_per_round and max_rounds must be >= 1".into(),
            ));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "convergence_tol must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One fitting round in the history trace.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRound {
    /// 1-based round index.
    pub round: usize,
    /// Sum of squared bivariate residuals at this round.
    pub residual: f64,
    /// Step size in force when the round's update was applied.
    pub step_size: f64,
}

/// Result of [`fit_potts`]: final parameters plus the optimization trace.
#[derive(Debug, Clone)]
pub struct PottsFit {
    pub params: PottsParams,
    pub history: Vec<FitRound>,
    pub converged: bool,
}

impl PottsFit {
    /// History as CSV with header `round,residual,gamma`.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("round,residual,gamma\n");
        for r in &self.history {
            out.push_str(&format!("{},{},{}\n", r.round, r.residual, r.step_size));
        }
        out
    }
}

/// Counts chain states into matched-convention smoothed marginals.
/// Univariate uses pseudocount q·pc against denominator 1 + q²·pc so the
/// bivariate tables (pseudocount pc, same denominator) marginalize to it
/// exactly, mirroring how the data-side targets are built.
fn chain_marginals(states: &[u8], l: usize, q: usize, pc: f64, uni: &mut [f64], bi: &mut [f64]) {
    let n_chains = states.len() / l;
    let mut counts_uni = vec![0u64; l * q];
    let mut counts_bi = vec![0u64; pair_count(l) * q * q];
    for chain in states.chunks_exact(l) {
        let mut pair = 0usize;
        for (i, &a) in chain.iter().enumerate() {
            counts_uni[i * q + a as usize] += 1;
            for &b in &chain[i + 1..] {
                counts_bi[pair * q * q + a as usize * q + b as usize] += 1;
                pair += 1;
            }
        }
    }
    let n = n_chains as f64;
    let denom = 1.0 + q as f64 * q as f64 * pc;
    for (dst, &c) in uni.iter_mut().zip(&counts_uni) {
        *dst = (c as f64 / n + q as f64 * pc) / denom;
    }
    for (dst, &c) in bi.iter_mut().zip(&counts_bi) {
        *dst = (c as f64 / n + pc) / denom;
    }
}

/// Fits field and coupling parameters to a training alignment by damped
/// marginal matching with persistent Gibbs chains, then converts the result
/// to the zero-sum gauge. Returns the best-so-far parameters with
/// `converged = false` if max_rounds passes without the bivariate residual
/// dropping below convergence_tol.
pub fn fit_potts(train: &Msa, config: &FitConfig) -> Result<PottsFit> {
    config.validate()?;
    let l = train.seq_len();
    let q = train.alphabet().q();
    if l < 2 {
        return Err(Error::InvalidArgument(
            "pairwise fit needs sequences of length >= 2".into(),
        ));
    }
    if train.n_seqs() == 0 {
        return Err(Error::EmptyAlignment);
    }
    let pc = config.pseudocount.unwrap_or(1.0 / train.n_seqs() as f64);

    // data-side targets under the matched smoothing convention
    let data_bi = bivariate_marginals(train, pc)?;
    let data_uni = data_bi.to_univariate();
    let data_uni_flat: Vec<f64> = data_uni.freqs().iter().cloned().collect();
    let data_bi_flat: Vec<f64> = data_bi
        .tables()
        .iter()
        .flat_map(|t| t.iter().cloned())
        .collect();
    if data_uni_flat.iter().any(|&f| f <= 0.0) {
        return Err(Error::InvalidArgument(
            "a symbol never occurs in the training data; use a positive pseudocount".into(),
        ));
    }

    // initialization: independent-model fields, zero couplings
    let n_pairs = pair_count(l);
    let mut h: Vec<f64> = data_uni_flat.iter().map(|&f| -f.ln()).collect();
    let mut j = vec![0.0f64; n_pairs * q * q];

    let alphabet = train.alphabet().clone();
    let mut params = PottsParams::zero(l, alphabet.clone())?;
    let mut engine = GibbsEngine::new(&params);
    engine.set_params(&h, &j);

    let mut rngs: Vec<ChaCha8Rng> = (0..config.n_chains)
        .map(|c| stream_rng(config.seed, c as u64))
        .collect();
    let mut states: Vec<u8> = {
        let mut flat = Vec::with_capacity(config.n_chains * l);
        for rng in rngs.iter_mut() {
            flat.extend(engine.init_state(rng));
        }
        flat
    };

    let advance =
        |engine: &GibbsEngine, states: &mut [u8], rngs: &mut [ChaCha8Rng], sweeps: usize| {
            states
                .par_chunks_exact_mut(l)
                .zip(rngs.par_iter_mut())
                .for_each(|(state, rng)| {
                    let mut cond = vec![0.0; q];
                    for _ in 0..sweeps {
                        engine.sweep(state, rng, &mut cond);
                    }
                });
        };

    advance(
        &engine,
        &mut states,
        &mut rngs,
        INITIAL_EQUILIBRATION_ROUNDS * config.steps_per_round,
    );

    let mut est_uni = vec![0.0f64; l * q];
    let mut est_bi = vec![0.0f64; n_pairs * q * q];
    let mut round_uni = vec![0.0f64; l * q];
    let mut round_bi = vec![0.0f64; n_pairs * q * q];
    let mut gamma = config.step_size;
    let min_gamma = config.step_size * MIN_STEP_FRACTION;
    let mut history = Vec::with_capacity(config.max_rounds);
    let mut prev_ssr = f64::INFINITY;
    let mut converged = false;

    for round in 1..=config.max_rounds {
        advance(&engine, &mut states, &mut rngs, config.steps_per_round);
        chain_marginals(&states, l, q, pc, &mut round_uni, &mut round_bi);
        if round == 1 {
            est_uni.copy_from_slice(&round_uni);
            est_bi.copy_from_slice(&round_bi);
        } else {
            let d = config.damping;
            for (e, &r) in est_uni.iter_mut().zip(&round_uni) {
                *e = d * *e + (1.0 - d) * r;
            }
            for (e, &r) in est_bi.iter_mut().zip(&round_bi) {
                *e = d * *e + (1.0 - d) * r;
            }
        }

        let ssr: f64 = est_bi
            .iter()
            .zip(&data_bi_flat)
            .map(|(&m, &t)| (m - t) * (m - t))
            .sum();
        history.push(FitRound {
            round,
            residual: ssr,
            step_size: gamma,
        });
        if ssr < config.convergence_tol {
            converged = true;
            break;
        }
        if ssr > RESIDUAL_JUMP_FACTOR * prev_ssr {
            gamma = (gamma * 0.5).max(min_gamma);
        }
        prev_ssr = ssr;

        // marginal-matching step: raising the energy of overrepresented
        // states lowers their probability, so the residual enters with a
        // positive sign
        for ((hv, &m), &t) in h.iter_mut().zip(&est_uni).zip(&data_uni_flat) {
            *hv += gamma * (m - t);
        }
        for ((jv, &m), &t) in j.iter_mut().zip(&est_bi).zip(&data_bi_flat) {
            *jv += gamma * (m - t);
        }
        // penalty step with a zero-crossing clamp: a coupling the penalty
        // alone would flip in sign is set exactly to zero instead
        for jv in j.iter_mut() {
            let before = *jv;
            let grad = scad_penalty(before, config.lambda, config.scad_a)?.1;
            let after = before - gamma * grad;
            *jv = if before * after < 0.0 { 0.0 } else { after };
        }
        engine.set_params(&h, &j);
    }

    let h_arr = Array2::from_shape_vec((l, q), h).expect("h shape");
    let j_tables: Vec<Array2<f64>> = j
        .chunks_exact(q * q)
        .map(|c| Array2::from_shape_vec((q, q), c.to_vec()).expect("J table shape"))
        .collect();
    params = PottsParams::new(h_arr, j_tables, alphabet)?;
    Ok(PottsFit {
        params: params.to_zero_sum_gauge(),
        history,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Alphabet;
    use crate::indep::sample_indep;
    use crate::marginals::covariances_of;
    use crate::msa::Msa;
    use crate::potts::gibbs_sample;
    use ndarray::Array2;

    fn small_config(n_chains: usize, max_rounds: usize) -> FitConfig {
        FitConfig {
            n_chains,
            max_rounds,
            steps_per_round: 8,
            step_size: 0.5,
            damping: 0.5,
            seed: 5,
            ..FitConfig::default()
        }
    }

    #[test]
    fn independent_data_yields_near_zero_couplings() {
        // data drawn from an independent model: every coupling should
        // shrink to (near) zero and the fit should converge
        let alphabet = Alphabet::from_spec("ABC").unwrap();
        let probs = [0.6, 0.3, 0.1];
        let h = Array2::from_shape_fn((4, 3), |(_, a)| -f64::ln(probs[a]));
        let indep = crate::indep::IndepParams::new(h, alphabet, 0.0).unwrap();
        let train = sample_indep(&indep, 20_000, 7).unwrap();

        let fit = fit_potts(&train, &small_config(8192, 120)).unwrap();
        assert!(fit.converged, "null fit should reach tolerance");
        assert!(
            fit.params.max_abs_coupling() < 0.05,
            "max |J| = {}",
            fit.params.max_abs_coupling()
        );
        // fields must still reproduce the single-site statistics: compare
        // model samples against the training marginals
        let samples = gibbs_sample(&fit.params, 20_000, 64, 30, 2, 3).unwrap();
        let f_data = crate::marginals::univariate_marginals(&train, 0.0).unwrap();
        let f_model = crate::marginals::univariate_marginals(&samples, 0.0).unwrap();
        for i in 0..4 {
            for a in 0..3 {
                let diff = (f_data.row(i)[a] - f_model.row(i)[a]).abs();
                assert!(diff < 0.02, "site {i} symbol {a}: {diff}");
            }
        }
    }

    #[test]
    fn strongly_paired_data_recovers_negative_pair_couplings() {
        // two perfectly correlated sites: rows are AA or BB only, so the
        // fitted coupling must favor equal symbols over mixed ones
        let alphabet = Alphabet::from_spec("AB").unwrap();
        let mut rows = Vec::new();
        let mut ids = Vec::new();
        for r in 0..400 {
            rows.push(if r % 2 == 0 { [0u8, 0u8] } else { [1u8, 1u8] });
            ids.push(format!("s{r}"));
        }
        let data = Array2::from_shape_vec(
            (400, 2),
            rows.iter().flat_map(|r| r.iter().cloned()).collect(),
        )
        .unwrap();
        let train = Msa::from_codes(data, alphabet, ids).unwrap();

        let fit = fit_potts(&train, &small_config(4096, 200)).unwrap();
        let j = fit.params.coupling(0, 1).unwrap();
        // zero-sum gauge: equal-symbol entries negative, mixed positive
        assert!(j[(0, 0)] < -0.2, "J_AA = {}", j[(0, 0)]);
        assert!(j[(1, 1)] < -0.2, "J_BB = {}", j[(1, 1)]);
        assert!(j[(0, 1)] > 0.2, "J_AB = {}", j[(0, 1)]);
        assert!(j[(1, 0)] > 0.2, "J_BA = {}", j[(1, 0)]);
        // samples from the fit reproduce the pair statistic
        let samples = gibbs_sample(&fit.params, 10_000, 64, 30, 2, 9).unwrap();
        let bi = bivariate_marginals(&samples, 0.0).unwrap();
        let table = bi.pair(0, 1).unwrap();
        let same = table[(0, 0)] + table[(1, 1)];
        assert!(same > 0.9, "equal-symbol mass = {same}");
    }

    #[test]
    fn residual_trend_decreases_and_history_is_complete() {
        // correlated data: couplings start at zero, so the bivariate
        // residual begins far from the target and must descend
        let alphabet = Alphabet::from_spec("AB").unwrap();
        let mut flat = Vec::with_capacity(400 * 2);
        let mut ids = Vec::with_capacity(400);
        for r in 0..400 {
            let s = (r % 2) as u8;
            flat.extend_from_slice(&[s, s]);
            ids.push(format!("s{r}"));
        }
        let train = Msa::from_codes(
            Array2::from_shape_vec((400, 2), flat).unwrap(),
            alphabet,
            ids,
        )
        .unwrap();
        let mut config = small_config(2048, 40);
        config.convergence_tol = 1e-12; // force a full-length history
        let fit = fit_potts(&train, &config).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.history.len(), 40);
        for (k, r) in fit.history.iter().enumerate() {
            assert_eq!(r.round, k + 1);
            assert!(r.residual.is_finite() && r.residual >= 0.0);
        }
        // averaged over windows, the residual must fall substantially
        let early: f64 = fit.history[..5].iter().map(|r| r.residual).sum::<f64>() / 5.0;
        let late: f64 = fit.history[35..].iter().map(|r| r.residual).sum::<f64>() / 5.0;
        assert!(
            late < 0.1 * early,
            "residual did not fall: early {early}, late {late}"
        );
        let csv = fit.history_csv();
        assert!(csv.starts_with("round,residual,gamma\n"));
        assert_eq!(csv.lines().count(), 41);
    }

    #[test]
    fn fitted_model_reproduces_covariances_of_correlated_data() {
        // three sites, middle one copying the first with noise: the fitted
        // model's sample covariances must correlate with the data's
        let alphabet = Alphabet::from_spec("AB").unwrap();
        let mut rng = crate::rng::stream_rng(17, 0);
        use rand::Rng;
        let n = 8_000;
        let mut flat = Vec::with_capacity(n * 3);
        for _ in 0..n {
            let a: u8 = rng.random_range(0..2);
            let b = if rng.random::<f64>() < 0.8 { a } else { 1 - a };
            let c: u8 = rng.random_range(0..2);
            flat.extend_from_slice(&[a, b, c]);
        }
        let ids = (0..n).map(|r| format!("s{r}")).collect();
        let train =
            Msa::from_codes(Array2::from_shape_vec((n, 3), flat).unwrap(), alphabet, ids).unwrap();

        let fit = fit_potts(&train, &small_config(8192, 150)).unwrap();
        let samples = gibbs_sample(&fit.params, 20_000, 64, 30, 2, 5).unwrap();
        let pc = 1.0 / n as f64;
        let cov_data = covariances_of(&train, pc).unwrap().flatten();
        let cov_model = covariances_of(&samples, pc).unwrap().flatten();
        let rho = crate::stats::pearson(&cov_data, &cov_model).unwrap();
        assert!(rho > 0.95, "covariance correlation = {rho}");
        // the strong pair must dominate: check its sign survived the fit
        let j01 = fit.params.coupling(0, 1).unwrap();
        assert!(j01[(0, 0)] < 0.0 && j01[(1, 1)] < 0.0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let alphabet = Alphabet::from_spec("AB").unwrap();
        let data = Array2::zeros((4, 3));
        let ids = (0..4).map(|r| format!("s{r}")).collect();
        let train = Msa::from_codes(data, alphabet, ids).unwrap();
        for (field, config) in [
            (
                "lambda",
                FitConfig {
                    lambda: 0.0,
                    ..FitConfig::default()
                },
            ),
            (
                "scad_a",
                FitConfig {
                    scad_a: 2.0,
                    ..FitConfig::default()
                },
            ),
            (
                "damping",
                FitConfig {
                    damping: 1.0,
                    ..FitConfig::default()
                },
            ),
            (
                "step",
                FitConfig {
                    step_size: 0.0,
                    ..FitConfig::default()
                },
            ),
            (
                "tol",
                FitConfig {
                    convergence_tol: 0.0,
                    ..FitConfig::default()
                },
            ),
            (
                "chains",
                FitConfig {
                    n_chains: 1,
                    ..FitConfig::default()
                },
            ),
            (
                "rounds",
                FitConfig {
                    max_rounds: 0,
                    ..FitConfig::default()
                },
            ),
            (
                "pseudocount",
                FitConfig {
                    pseudocount: Some(-0.1),
                    ..FitConfig::default()
                },
            ),
        ] {
            assert!(fit_potts(&train, &config).is_err(), "{field} accepted");
        }
    }
}
