//! Run configuration: a versioned TOML file describing input data, splits,
//! the model roster with per-model settings, evaluation sizes, and the
//! metric roster.
//!
//! Unset fields take documented defaults; [`PipelineConfig::resolved`]
//! fills them in so the manifest records exactly what a run used. The only
//! environment overrides are `GPSM_OUTPUT_DIR` and `GPSM_THREADS`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potts::FitConfig;
use crate::vae::{TrainConfig, VaeArch};

/// Schema tag expected at the top of every run configuration.
pub const CONFIG_SCHEMA: &str = "gpsm-run-1";

pub const MODEL_KINDS: [&str; 3] = ["indep", "potts", "svae"];
pub const METRIC_KINDS: [&str; 4] = ["covariance", "r20", "hamming", "energy"];

const DEFAULT_EVAL_SIZE: usize = 50_000;
const DEFAULT_EVAL_CHAINS: usize = 256;
const DEFAULT_EVAL_BURN_IN: usize = 500;
const DEFAULT_EVAL_THIN: usize = 10;
const DEFAULT_R20_SETS: usize = 3000;
const DEFAULT_R20_TOP_K: usize = 20;
/// Default highest r20 order on the synthetic track.
const DEFAULT_R20_MAX_ORDER: usize = 10;
/// Default highest r20 order on the natural track, where sparse counts make
/// deep orders uninformative. A default, not a limit.
const DEFAULT_R20_MAX_ORDER_NATURAL: usize = 7;
const DEFAULT_HAMMING_PAIR_BUDGET: u64 = 100_000;
const DEFAULT_ENERGY_SEQUENCES: usize = 1000;
const DEFAULT_SVAE_ESTIMATOR: &str = "elbo";
const DEFAULT_SVAE_ENERGY_SAMPLES: usize = 64;

/// Top-level run configuration. See the module docs for the TOML layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema: String,
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    pub output_dir: String,
    /// Rayon thread count for this run; None leaves the global default.
    #[serde(default)]
    pub threads: Option<usize>,
    pub input: InputConfig,
    pub split: SplitConfig,
    pub models: ModelsConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    pub metrics: MetricsConfig,
}

/// Input source: exactly one of `fasta` (natural track) or `target_model`
/// (synthetic track, a stored Potts model).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputConfig {
    pub fasta: Option<String>,
    pub target_model: Option<String>,
    /// Alphabet spec for FASTA input: "protein" or a literal symbol string
    /// ('-' is treated as the gap when present).
    pub alphabet: Option<String>,
    /// Greedy identity filter cutoff applied before splitting (natural
    /// track); sequences more similar than this to a kept one are dropped.
    pub max_identity: Option<f64>,
}

impl InputConfig {
    pub fn is_synthetic(&self) -> bool {
        self.target_model.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    /// Rows in the training alignment.
    pub train: usize,
    /// Rows in the target (reference) alignment.
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsConfig {
    /// Models to fit, in run order; each entry is one of "indep", "potts",
    /// "svae".
    pub roster: Vec<String>,
    #[serde(default)]
    pub indep: IndepModelConfig,
    #[serde(default)]
    pub potts: PottsModelConfig,
    #[serde(default)]
    pub svae: SvaeModelConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndepModelConfig {
    /// Frequency smoothing; None means 1/N of the training alignment.
    pub pseudocount: Option<f64>,
}

/// Potts fit settings; every unset field falls back to the library default.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PottsModelConfig {
    pub pseudocount: Option<f64>,
    pub lambda: Option<f64>,
    pub scad_a: Option<f64>,
    pub step_size: Option<f64>,
    pub damping: Option<f64>,
    pub n_chains: Option<usize>,
    pub steps_per_round: Option<usize>,
    pub max_rounds: Option<usize>,
    pub convergence_tol: Option<f64>,
}

impl PottsModelConfig {
    pub fn to_fit_config(&self, seed: u64) -> FitConfig {
        let d = FitConfig::default();
        FitConfig {
            pseudocount: self.pseudocount.or(d.pseudocount),
            lambda: self.lambda.unwrap_or(d.lambda),
            scad_a: self.scad_a.unwrap_or(d.scad_a),
            step_size: self.step_size.unwrap_or(d.step_size),
            damping: self.damping.unwrap_or(d.damping),
            n_chains: self.n_chains.unwrap_or(d.n_chains),
            steps_per_round: self.steps_per_round.unwrap_or(d.steps_per_round),
            max_rounds: self.max_rounds.unwrap_or(d.max_rounds),
            convergence_tol: self.convergence_tol.unwrap_or(d.convergence_tol),
            seed,
        }
    }

    fn resolved(&self) -> PottsModelConfig {
        let d = FitConfig::default();
        PottsModelConfig {
            // None means "1/N of the training data", which is data-dependent
            // and stays symbolic here.
            pseudocount: self.pseudocount,
            lambda: Some(self.lambda.unwrap_or(d.lambda)),
            scad_a: Some(self.scad_a.unwrap_or(d.scad_a)),
            step_size: Some(self.step_size.unwrap_or(d.step_size)),
            damping: Some(self.damping.unwrap_or(d.damping)),
            n_chains: Some(self.n_chains.unwrap_or(d.n_chains)),
            steps_per_round: Some(self.steps_per_round.unwrap_or(d.steps_per_round)),
            max_rounds: Some(self.max_rounds.unwrap_or(d.max_rounds)),
            convergence_tol: Some(self.convergence_tol.unwrap_or(d.convergence_tol)),
        }
    }
}

/// VAE architecture and training settings. Unset architecture fields fall
/// back to the desk-scale default for the alignment's dimensions; unset
/// training fields fall back to the library default.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvaeModelConfig {
    pub hidden_widths: Option<Vec<usize>>,
    pub latent_dim: Option<usize>,
    pub dropout_rate: Option<f64>,
    pub use_batch_norm: Option<bool>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub validation_fraction: Option<f64>,
    pub learning_rate: Option<f64>,
}

impl SvaeModelConfig {
    pub fn to_arch(&self, l: usize, q: usize) -> VaeArch {
        let base = VaeArch::desk_scale(l, q);
        VaeArch {
            l,
            q,
            hidden_widths: self.hidden_widths.clone().unwrap_or(base.hidden_widths),
            latent_dim: self.latent_dim.unwrap_or(base.latent_dim),
            dropout_rate: self.dropout_rate.unwrap_or(base.dropout_rate),
            use_batch_norm: self.use_batch_norm.unwrap_or(base.use_batch_norm),
        }
    }

    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            validation_fraction: self.validation_fraction.unwrap_or(d.validation_fraction),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            beta1: d.beta1,
            beta2: d.beta2,
            epsilon: d.epsilon,
            seed,
        }
    }

    fn resolved(&self) -> SvaeModelConfig {
        let d = TrainConfig::default();
        SvaeModelConfig {
            // architecture defaults depend on (L, q); data-dependent fields
            // stay symbolic and are recorded in the saved model instead
            hidden_widths: self.hidden_widths.clone(),
            latent_dim: self.latent_dim,
            dropout_rate: self.dropout_rate,
            use_batch_norm: self.use_batch_norm,
            epochs: Some(self.epochs.unwrap_or(d.epochs)),
            batch_size: Some(self.batch_size.unwrap_or(d.batch_size)),
            validation_fraction: Some(self.validation_fraction.unwrap_or(d.validation_fraction)),
            learning_rate: Some(self.learning_rate.unwrap_or(d.learning_rate)),
        }
    }
}

/// Evaluation-alignment settings. The Gibbs sampler knobs also govern
/// stage-1 sampling from a synthetic target model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    /// Rows in each generated evaluation alignment (and in the synthetic
    /// r20 ceiling sample).
    pub size: Option<usize>,
    pub n_chains: Option<usize>,
    pub burn_in_sweeps: Option<usize>,
    pub thin_sweeps: Option<usize>,
}

impl EvaluationConfig {
    pub fn size(&self) -> usize {
        self.size.unwrap_or(DEFAULT_EVAL_SIZE)
    }

    pub fn n_chains(&self) -> usize {
        self.n_chains.unwrap_or(DEFAULT_EVAL_CHAINS)
    }

    pub fn burn_in_sweeps(&self) -> usize {
        self.burn_in_sweeps.unwrap_or(DEFAULT_EVAL_BURN_IN)
    }

    pub fn thin_sweeps(&self) -> usize {
        self.thin_sweeps.unwrap_or(DEFAULT_EVAL_THIN)
    }

    fn resolved(&self) -> EvaluationConfig {
        EvaluationConfig {
            size: Some(self.size()),
            n_chains: Some(self.n_chains()),
            burn_in_sweeps: Some(self.burn_in_sweeps()),
            thin_sweeps: Some(self.thin_sweeps()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Metrics to compute, each one of "covariance", "r20", "hamming",
    /// "energy". The energy metric needs a synthetic target model.
    pub roster: Vec<String>,
    #[serde(default)]
    pub r20_sets: Option<usize>,
    #[serde(default)]
    pub r20_max_order: Option<usize>,
    #[serde(default)]
    pub r20_top_k: Option<usize>,
    #[serde(default)]
    pub hamming_pair_budget: Option<u64>,
    #[serde(default)]
    pub energy_sequences: Option<usize>,
    /// How the VAE scores sequence energies: "elbo" or "importance".
    #[serde(default)]
    pub svae_estimator: Option<String>,
    #[serde(default)]
    pub svae_energy_samples: Option<usize>,
}

impl MetricsConfig {
    pub fn r20_sets(&self) -> usize {
        self.r20_sets.unwrap_or(DEFAULT_R20_SETS)
    }

    pub fn r20_max_order(&self, synthetic: bool) -> usize {
        self.r20_max_order.unwrap_or(if synthetic {
            DEFAULT_R20_MAX_ORDER
        } else {
            DEFAULT_R20_MAX_ORDER_NATURAL
        })
    }

    pub fn r20_top_k(&self) -> usize {
        self.r20_top_k.unwrap_or(DEFAULT_R20_TOP_K)
    }

    pub fn hamming_pair_budget(&self) -> u64 {
        self.hamming_pair_budget
            .unwrap_or(DEFAULT_HAMMING_PAIR_BUDGET)
    }

    pub fn energy_sequences(&self) -> usize {
        self.energy_sequences.unwrap_or(DEFAULT_ENERGY_SEQUENCES)
    }

    pub fn svae_estimator(&self) -> &str {
        self.svae_estimator
            .as_deref()
            .unwrap_or(DEFAULT_SVAE_ESTIMATOR)
    }

    pub fn svae_energy_samples(&self) -> usize {
        self.svae_energy_samples
            .unwrap_or(DEFAULT_SVAE_ENERGY_SAMPLES)
    }

    fn resolved(&self, synthetic: bool) -> MetricsConfig {
        MetricsConfig {
            roster: self.roster.clone(),
            r20_sets: Some(self.r20_sets()),
            r20_max_order: Some(self.r20_max_order(synthetic)),
            r20_top_k: Some(self.r20_top_k()),
            hamming_pair_budget: Some(self.hamming_pair_budget()),
            energy_sequences: Some(self.energy_sequences()),
            svae_estimator: Some(self.svae_estimator().to_string()),
            svae_energy_samples: Some(self.svae_energy_samples()),
        }
    }
}

impl PipelineConfig {
    /// Parses a TOML run configuration. Parse problems are config errors.
    pub fn from_toml(text: &str) -> Result<PipelineConfig> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))
    }

    /// A copy with every defaultable field made explicit, so the manifest
    /// records the exact settings a run used.
    pub fn resolved(&self) -> PipelineConfig {
        let mut out = self.clone();
        out.models.potts = self.models.potts.resolved();
        out.models.svae = self.models.svae.resolved();
        out.evaluation = self.evaluation.resolved();
        out.metrics = self.metrics.resolved(self.input.is_synthetic());
        out
    }

    /// Applies the output-dir and thread-count overrides; empty strings are
    /// ignored. Exposed separately from the environment for testing.
    pub fn apply_overrides(
        &mut self,
        output_dir: Option<&str>,
        threads: Option<&str>,
    ) -> Result<()> {
        if let Some(dir) = output_dir {
            if !dir.is_empty() {
                self.output_dir = dir.to_string();
            }
        }
        if let Some(t) = threads {
            if !t.is_empty() {
                let n: usize = t.parse().map_err(|_| {
                    Error::Config(format!(
                        "GPSM_THREADS must be a positive integer, got '{t}'"
                    ))
                })?;
                if n == 0 {
                    return Err(Error::Config("GPSM_THREADS must be at least 1".into()));
                }
                self.threads = Some(n);
            }
        }
        Ok(())
    }

    /// Reads `GPSM_OUTPUT_DIR` and `GPSM_THREADS` from the environment.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        let dir = std::env::var("GPSM_OUTPUT_DIR").ok();
        let threads = std::env::var("GPSM_THREADS").ok();
        self.apply_overrides(dir.as_deref(), threads.as_deref())
    }

    /// Structural validation: everything checkable without touching the
    /// input files. All failures are config errors.
    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(Error::Config(format!(
                "unknown schema '{}', expected '{CONFIG_SCHEMA}'",
                self.schema
            )));
        }
        if self.output_dir.is_empty() {
            return Err(Error::Config("output_dir must not be empty".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        match (&self.input.fasta, &self.input.target_model) {
            (None, None) => {
                return Err(Error::Config(
                    "input needs either a fasta path or a target_model path".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "input must name exactly one of fasta and target_model".into(),
                ))
            }
            (Some(_), None) if self.input.alphabet.is_none() => {
                return Err(Error::Config("fasta input needs an alphabet".into()))
            }
            _ => {}
        }
        if let Some(cutoff) = self.input.max_identity {
            if !(cutoff > 0.0 && cutoff < 1.0) {
                return Err(Error::Config(format!(
                    "max_identity must lie in (0, 1), got {cutoff}"
                )));
            }
        }
        if self.split.train == 0 || self.split.target == 0 {
            return Err(Error::Config("split sizes must be positive".into()));
        }
        if self.models.roster.is_empty() {
            return Err(Error::Config("model roster must not be empty".into()));
        }
        for (i, name) in self.models.roster.iter().enumerate() {
            if !MODEL_KINDS.contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "unknown model kind '{name}'; expected one of {MODEL_KINDS:?}"
                )));
            }
            if self.models.roster[..i].contains(name) {
                return Err(Error::Config(format!("duplicate model '{name}' in roster")));
            }
        }
        for (i, name) in self.metrics.roster.iter().enumerate() {
            if !METRIC_KINDS.contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "unknown metric '{name}'; expected one of {METRIC_KINDS:?}"
                )));
            }
            if self.metrics.roster[..i].contains(name) {
                return Err(Error::Config(format!(
                    "duplicate metric '{name}' in roster"
                )));
            }
        }
        if self.metrics.roster.iter().any(|m| m == "energy") && !self.input.is_synthetic() {
            return Err(Error::Config(
                "the energy metric needs a synthetic target model; natural \
                 alignments have no reference energies"
                    .into(),
            ));
        }
        if self.evaluation.size() < 2 {
            return Err(Error::Config("evaluation size must be at least 2".into()));
        }
        if self.evaluation.n_chains() == 0
            || self.evaluation.burn_in_sweeps() == 0
            || self.evaluation.thin_sweeps() == 0
        {
            return Err(Error::Config(
                "evaluation sampler settings must be at least 1".into(),
            ));
        }
        if self.metrics.r20_sets() == 0 {
            return Err(Error::Config("r20_sets must be at least 1".into()));
        }
        if self.metrics.r20_max_order(self.input.is_synthetic()) < 2 {
            return Err(Error::Config("r20_max_order must be at least 2".into()));
        }
        if self.metrics.r20_top_k() < 2 {
            return Err(Error::Config("r20_top_k must be at least 2".into()));
        }
        if self.metrics.hamming_pair_budget() == 0 {
            return Err(Error::Config(
                "hamming_pair_budget must be at least 1".into(),
            ));
        }
        if self.metrics.energy_sequences() < 3 {
            return Err(Error::Config("energy_sequences must be at least 3".into()));
        }
        let estimator = self.metrics.svae_estimator();
        if estimator != "elbo" && estimator != "importance" {
            return Err(Error::Config(format!(
                "svae_estimator must be 'elbo' or 'importance', got '{estimator}'"
            )));
        }
        if self.metrics.svae_energy_samples() == 0 {
            return Err(Error::Config(
                "svae_energy_samples must be at least 1".into(),
            ));
        }
        // library-level constraints surface now rather than mid-run
        self.models
            .potts
            .to_fit_config(0)
            .validate()
            .map_err(|e| Error::Config(format!("potts settings: {e}")))?;
        self.models
            .svae
            .to_train_config(0)
            .validate()
            .map_err(|e| Error::Config(format!("svae settings: {e}")))?;
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn minimal_toml() -> String {
        [
            "schema = \"gpsm-run-1\"",
            "seed = 7",
            "output_dir = \"out\"",
            "[input]",
            "target_model = \"target.json\"",
            "[split]",
            "train = 100",
            "target = 100",
            "[models]",
            "roster = [\"indep\"]",
            "[metrics]",
            "roster = [\"covariance\"]",
        ]
        .join("\n")
    }

    #[test]
    fn minimal_config_parses_validates_and_resolves() {
        let cfg = PipelineConfig::from_toml(&minimal_toml()).unwrap();
        cfg.validate().unwrap();
        assert!(cfg.input.is_synthetic());
        let resolved = cfg.resolved();
        resolved.validate().unwrap();
        assert_eq!(resolved.evaluation.size, Some(50_000));
        assert_eq!(resolved.metrics.r20_max_order, Some(10));
        assert_eq!(resolved.metrics.svae_estimator.as_deref(), Some("elbo"));
        assert_eq!(resolved.models.potts.lambda, Some(1e-3));
        // resolving twice is a fixed point
        assert_eq!(resolved, resolved.resolved());
    }

    #[test]
    fn natural_track_defaults_max_order_to_seven() {
        let toml = minimal_toml()
            .replace(
                "target_model = \"target.json\"",
                "fasta = \"in.fasta\"\nalphabet = \"protein\"",
            )
            .replace("roster = [\"covariance\"]", "roster = [\"r20\"]");
        let cfg = PipelineConfig::from_toml(&toml).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.resolved().metrics.r20_max_order, Some(7));
    }

    #[test]
    fn unknown_keys_and_bad_schema_are_config_errors() {
        let toml = minimal_toml() + "\nsurprise = 1";
        assert!(matches!(
            PipelineConfig::from_toml(&toml),
            Err(Error::Config(_))
        ));
        let cfg =
            PipelineConfig::from_toml(&minimal_toml().replace("gpsm-run-1", "gpsm-run-0")).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn validation_rejects_structural_mistakes() {
        let base = PipelineConfig::from_toml(&minimal_toml()).unwrap();

        let mut c = base.clone();
        c.input.fasta = Some("x.fasta".into());
        assert!(c.validate().is_err(), "two input sources");

        let mut c = base.clone();
        c.input.target_model = None;
        assert!(c.validate().is_err(), "no input source");

        let mut c = base.clone();
        c.input = InputConfig {
            fasta: Some("x.fasta".into()),
            ..InputConfig::default()
        };
        assert!(c.validate().is_err(), "fasta without alphabet");

        let mut c = base.clone();
        c.split.train = 0;
        assert!(c.validate().is_err(), "zero split");

        let mut c = base.clone();
        c.models.roster = vec!["indep".into(), "indep".into()];
        assert!(c.validate().is_err(), "duplicate model");

        let mut c = base.clone();
        c.models.roster = vec!["gan".into()];
        assert!(c.validate().is_err(), "unknown model");

        let mut c = base.clone();
        c.metrics.roster = vec!["perplexity".into()];
        assert!(c.validate().is_err(), "unknown metric");

        let mut c = base.clone();
        c.input = InputConfig {
            fasta: Some("x.fasta".into()),
            alphabet: Some("protein".into()),
            ..InputConfig::default()
        };
        c.metrics.roster = vec!["energy".into()];
        assert!(c.validate().is_err(), "energy without target model");

        let mut c = base.clone();
        c.metrics.r20_top_k = Some(1);
        assert!(c.validate().is_err(), "top_k below 2");

        let mut c = base.clone();
        c.metrics.svae_estimator = Some("exact".into());
        assert!(c.validate().is_err(), "unknown estimator");

        let mut c = base.clone();
        c.models.potts.damping = Some(1.5);
        assert!(c.validate().is_err(), "potts settings out of range");

        let mut c = base;
        c.models.svae.validation_fraction = Some(1.5);
        assert!(c.validate().is_err(), "svae settings out of range");
    }

    #[test]
    fn overrides_replace_output_dir_and_threads() {
        let mut cfg = PipelineConfig::from_toml(&minimal_toml()).unwrap();
        cfg.apply_overrides(Some("elsewhere"), Some("3")).unwrap();
        assert_eq!(cfg.output_dir, "elsewhere");
        assert_eq!(cfg.threads, Some(3));
        cfg.apply_overrides(Some(""), None).unwrap();
        assert_eq!(cfg.output_dir, "elsewhere");
        assert!(cfg.apply_overrides(None, Some("many")).is_err());
        assert!(cfg.apply_overrides(None, Some("0")).is_err());
    }

    #[test]
    fn per_model_settings_flow_into_library_configs() {
        let toml = minimal_toml()
            + "\n[models.potts]\nn_chains = 64\nlambda = 0.01\n[models.svae]\nepochs = 5\nhidden_widths = [16, 16]\nlatent_dim = 3"
        ;
        let cfg = PipelineConfig::from_toml(&toml).unwrap();
        let fit = cfg.models.potts.to_fit_config(9);
        assert_eq!(fit.n_chains, 64);
        assert_eq!(fit.lambda, 0.01);
        assert_eq!(fit.seed, 9);
        assert_eq!(fit.max_rounds, FitConfig::default().max_rounds);
        let arch = cfg.models.svae.to_arch(12, 4);
        assert_eq!(arch.hidden_widths, vec![16, 16]);
        assert_eq!(arch.latent_dim, 3);
        assert_eq!((arch.l, arch.q), (12, 4));
        let tc = cfg.models.svae.to_train_config(11);
        assert_eq!(tc.epochs, 5);
        assert_eq!(tc.seed, 11);
    }
}
