//! End-to-end run orchestration: sequester input data, process it into
//! disjoint train and target alignments, fit the rostered models, generate
//! evaluation alignments, and score them with the rostered metrics.
//!
//! Every run writes its artifacts under one output directory and records
//! them in a manifest: the resolved configuration, content hashes of the
//! inputs, the derived seed of every randomized step, and the hash of every
//! file written. Re-running the same configuration reproduces the same
//! artifact bytes, so the manifest doubles as a reproducibility receipt.
//! Wall-clock timings vary run to run and live in a separate
//! `timings.json` to keep the manifest byte-stable.
//!
//! A stage failure aborts the run, names the stage and cause in the error,
//! and leaves the artifacts written so far on disk, flagged by a
//! `manifest.partial.json` whose status records the failed stage.

pub mod config;
mod report;
mod svg;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::indep::{energy_indep, fit_indep, sample_indep, IndepParams};
use crate::marginals::covariances_of;
use crate::metrics::{
    covariance_correlation, energy_correlation, hamming_tvd, r20, rescale_loglog, InputFingerprint,
    MetricReport, MetricValue,
};
use crate::msa::Msa;
use crate::potts::{fit_potts, gibbs_sample, potts_energy, PottsParams};
use crate::rng::{derive_seed, sha256_hex};
use crate::vae::{elbo, log_prob_importance, sample_vae, train_vae, VaeParams};

pub use config::PipelineConfig;
pub use report::{emit_report, ModelSummary, OrderMean, ReportFormat, SummaryDoc};

/// Schema tag of the run manifest.
pub const MANIFEST_VERSION: &str = "gpsm-manifest-1";

const STAGE_SEQUESTER: &str = "stage1_sequester";
const STAGE_PROCESS: &str = "stage2_process";
const STAGE_TRAIN: &str = "stage3_train";
const STAGE_GENERATE: &str = "stage4_generate";
const STAGE_MEASURE: &str = "stage5_measure";

/// Most batches of fresh samples the sequestration stage will draw while
/// rejecting rows already claimed by an earlier alignment.
const MAX_RESAMPLE_BATCHES: usize = 16;

/// One file written by a run: its path relative to the output directory
/// (always '/'-separated), its content hash, and the stage that wrote it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: String,
    pub sha256: String,
    pub stage: String,
}

/// Complete record of a run. `status` is "complete" for a finished run and
/// "failed: <stage>" on the partial manifest left behind by an abort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub status: String,
    /// The configuration with every defaultable field made explicit.
    pub config: PipelineConfig,
    /// Content hashes of the run inputs (FASTA bytes or target model file).
    pub inputs: Vec<InputFingerprint>,
    /// Derived seed of every randomized step, keyed by step label.
    pub stage_seeds: BTreeMap<String, u64>,
    pub artifacts: Vec<ArtifactRecord>,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(Error::from)
    }

    pub fn from_json(text: &str) -> Result<RunManifest> {
        let manifest: RunManifest = serde_json::from_str(text)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::ModelFormat(format!(
                "expected manifest version '{MANIFEST_VERSION}', found '{}'",
                manifest.version
            )));
        }
        Ok(manifest)
    }

    pub fn artifact(&self, path: &str) -> Option<&ArtifactRecord> {
        self.artifacts.iter().find(|a| a.path == path)
    }
}

/// Wall-clock seconds per stage, written alongside the manifest. Kept out
/// of the manifest so repeated runs produce identical manifest bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunTimings {
    pub version: String,
    pub stages: Vec<StageTiming>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// What deep validation learned about the input without running anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// "synthetic" when the input is a stored target model, else "natural".
    pub track: String,
    pub seq_len: usize,
    pub q: usize,
    /// Row count of the input alignment; None on the synthetic track, where
    /// data is drawn on demand.
    pub input_rows: Option<usize>,
}

/// Deep validation: structural checks plus everything that needs the input
/// files, such as split sizes against the available rows and model settings
/// against the alignment dimensions. All failures are config errors, so
/// they surface before any compute.
pub fn validate_pipeline(config: &PipelineConfig) -> Result<ValidationReport> {
    config.validate()?;
    let synthetic = config.input.is_synthetic();
    let (seq_len, q, input_rows) = if let Some(path) = &config.input.target_model {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("target model '{path}': {e}")))?;
        let params = PottsParams::from_json(&text)
            .map_err(|e| Error::Config(format!("target model '{path}': {e}")))?;
        (params.l(), params.q(), None)
    } else {
        let path = config.input.fasta.as_ref().expect("validated");
        let spec = config.input.alphabet.as_ref().expect("validated");
        let alphabet =
            Alphabet::from_spec(spec).map_err(|e| Error::Config(format!("alphabet: {e}")))?;
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("input fasta '{path}': {e}")))?;
        let msa = Msa::parse_fasta(&text, &alphabet)
            .map_err(|e| Error::Config(format!("input fasta '{path}': {e}")))?;
        let need = config.split.train + config.split.target;
        if msa.n_seqs() < need {
            return Err(Error::Config(format!(
                "split sizes need {need} rows but the input has {}; note the \
                 identity filter can only shrink it further",
                msa.n_seqs()
            )));
        }
        (msa.seq_len(), msa.alphabet().q(), Some(msa.n_seqs()))
    };
    let max_order = config.metrics.r20_max_order(synthetic);
    if config.metrics.roster.iter().any(|m| m == "r20") && max_order > seq_len {
        return Err(Error::Config(format!(
            "r20_max_order {max_order} exceeds the sequence length {seq_len}"
        )));
    }
    config
        .models
        .potts
        .to_fit_config(0)
        .validate()
        .map_err(|e| Error::Config(format!("potts settings: {e}")))?;
    if config.models.roster.iter().any(|m| m == "svae") {
        config
            .models
            .svae
            .to_arch(seq_len, q)
            .validate()
            .map_err(|e| Error::Config(format!("svae architecture: {e}")))?;
    }
    Ok(ValidationReport {
        track: if synthetic { "synthetic" } else { "natural" }.to_string(),
        seq_len,
        q,
        input_rows,
    })
}

/// Everything stage 1 hands to stage 2.
enum Sequestered {
    Natural {
        msa: Msa,
    },
    Synthetic {
        params: PottsParams,
        train: Msa,
        target: Msa,
        ceiling: Msa,
    },
}

/// Alignments and (on the synthetic track) reference material shared by the
/// later stages.
struct TrackData {
    train: Msa,
    target: Msa,
    /// Second disjoint target sample used as the r20 upper bound.
    ceiling: Option<Msa>,
    target_params: Option<PottsParams>,
}

enum FittedModel {
    Indep(IndepParams),
    Potts(PottsParams),
    Svae(VaeParams),
}

impl FittedModel {
    fn to_json(&self) -> Result<String> {
        match self {
            FittedModel::Indep(p) => p.to_json(),
            FittedModel::Potts(p) => p.to_json(),
            FittedModel::Svae(p) => p.to_json(),
        }
    }
}

/// Shared mutable run state threaded through the stages.
struct RunState {
    root: PathBuf,
    seed: u64,
    stage_seeds: BTreeMap<String, u64>,
    artifacts: Vec<ArtifactRecord>,
    timings: Vec<StageTiming>,
}

impl RunState {
    fn derive(&mut self, label: &str) -> u64 {
        let seed = derive_seed(self.seed, label);
        self.stage_seeds.insert(label.to_string(), seed);
        seed
    }

    /// Writes a file under the output directory and records it.
    fn write_artifact(&mut self, rel: &str, stage: &str, bytes: &[u8]) -> Result<()> {
        let mut path = self.root.clone();
        for part in rel.split('/') {
            path.push(part);
        }
        fs::write(&path, bytes)?;
        self.artifacts.push(ArtifactRecord {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            stage: stage.to_string(),
        });
        Ok(())
    }
}

fn run_stage<T>(
    name: &str,
    state: &mut RunState,
    f: impl FnOnce(&mut RunState) -> Result<T>,
) -> Result<T> {
    let t0 = Instant::now();
    let out = f(state);
    state.timings.push(StageTiming {
        stage: name.to_string(),
        seconds: t0.elapsed().as_secs_f64(),
    });
    out.map_err(|e| e.in_stage(name))
}

/// Runs the full pipeline described by `config` and returns the manifest.
///
/// The configuration is validated in depth first, so bad settings fail as
/// config errors before anything runs. On a stage failure the partial
/// artifacts stay on disk next to a `manifest.partial.json` marking the
/// failed stage, and the error names the stage and cause.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest> {
    let config = config.resolved();
    validate_pipeline(&config)?;

    let root = PathBuf::from(&config.output_dir);
    for dir in ["msas", "models", "reports", "figures"] {
        fs::create_dir_all(root.join(dir))?;
    }

    let mut state = RunState {
        root,
        seed: config.seed,
        stage_seeds: BTreeMap::new(),
        artifacts: Vec::new(),
        timings: Vec::new(),
    };

    match config.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| run_stages(&config, &mut state))
        }
        None => run_stages(&config, &mut state),
    }
    .map_err(|err| {
        // leave a flagged partial manifest next to whatever was written
        let failed_stage = match &err {
            Error::Stage { stage, .. } => stage.clone(),
            _ => "setup".to_string(),
        };
        let partial = RunManifest {
            version: MANIFEST_VERSION.to_string(),
            status: format!("failed: {failed_stage}"),
            config: config.clone(),
            inputs: state
                .artifacts
                .iter()
                .map(|a| InputFingerprint {
                    name: a.path.clone(),
                    sha256: a.sha256.clone(),
                })
                .collect(),
            stage_seeds: state.stage_seeds.clone(),
            artifacts: state.artifacts.clone(),
        };
        if let Ok(json) = partial.to_json() {
            let _ = fs::write(state.root.join("manifest.partial.json"), json);
        }
        let _ = write_timings(&state);
        err
    })
}

fn write_timings(state: &RunState) -> Result<()> {
    let timings = RunTimings {
        version: "gpsm-timings-1".to_string(),
        stages: state.timings.clone(),
    };
    let json = serde_json::to_string_pretty(&timings)?;
    fs::write(state.root.join("timings.json"), json)?;
    Ok(())
}

fn run_stages(config: &PipelineConfig, state: &mut RunState) -> Result<RunManifest> {
    let mut inputs: Vec<InputFingerprint> = Vec::new();

    let sequestered = run_stage(STAGE_SEQUESTER, state, |state| {
        stage_sequester(config, state, &mut inputs)
    })?;
    let track = run_stage(STAGE_PROCESS, state, |state| {
        stage_process(config, state, sequestered)
    })?;
    let models = run_stage(STAGE_TRAIN, state, |state| {
        stage_train(config, state, &track.train)
    })?;
    let evals = run_stage(STAGE_GENERATE, state, |state| {
        stage_generate(config, state, &models)
    })?;
    run_stage(STAGE_MEASURE, state, |state| {
        stage_measure(config, state, &track, &models, &evals)
    })?;

    let mut manifest = RunManifest {
        version: MANIFEST_VERSION.to_string(),
        status: "complete".to_string(),
        config: config.clone(),
        inputs,
        stage_seeds: state.stage_seeds.clone(),
        artifacts: state.artifacts.clone(),
    };

    // aggregate reports in every format, then record them as artifacts
    run_stage("report", state, |state| {
        for format in [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Svg] {
            for rel in emit_report(&manifest, format)? {
                let mut path = state.root.clone();
                for part in rel.split('/') {
                    path.push(part);
                }
                let bytes = fs::read(&path)?;
                state.artifacts.push(ArtifactRecord {
                    path: rel,
                    sha256: sha256_hex(&bytes),
                    stage: STAGE_MEASURE.to_string(),
                });
            }
        }
        Ok(())
    })?;
    manifest.artifacts = state.artifacts.clone();

    write_timings(state)?;
    let json = manifest.to_json()?;
    fs::write(state.root.join("manifest.json"), json)?;
    // a success supersedes any partial manifest a failed earlier run left
    // in the same directory
    let _ = fs::remove_file(state.root.join("manifest.partial.json"));
    Ok(manifest)
}

/// Stage 1: load the input data. On the synthetic track this draws the
/// train, target, and ceiling alignments from the stored target model as
/// mutually disjoint row sets.
fn stage_sequester(
    config: &PipelineConfig,
    state: &mut RunState,
    inputs: &mut Vec<InputFingerprint>,
) -> Result<Sequestered> {
    if let Some(path) = &config.input.target_model {
        let bytes = fs::read(path)?;
        inputs.push(InputFingerprint::of_bytes("target_model", &bytes));
        let params = PottsParams::from_json(
            std::str::from_utf8(&bytes)
                .map_err(|e| Error::Parse(format!("target model '{path}' is not utf-8: {e}")))?,
        )?;
        let ev = &config.evaluation;
        let mut forbidden: HashSet<Vec<u8>> = HashSet::new();
        let mut draw = |label: &str, n: usize, state: &mut RunState| -> Result<Msa> {
            sample_disjoint(
                &params,
                label,
                n,
                ev.n_chains(),
                ev.burn_in_sweeps(),
                ev.thin_sweeps(),
                &mut forbidden,
                state,
            )
        };
        let train = draw("train", config.split.train, state)?;
        let target = draw("target", config.split.target, state)?;
        let ceiling = draw("ceiling", ev.size(), state)?;
        Ok(Sequestered::Synthetic {
            params,
            train,
            target,
            ceiling,
        })
    } else {
        let path = config.input.fasta.as_ref().expect("validated");
        let bytes = fs::read(path)?;
        inputs.push(InputFingerprint::of_bytes("input_fasta", &bytes));
        let alphabet = Alphabet::from_spec(config.input.alphabet.as_ref().expect("validated"))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::Parse(format!("input fasta '{path}' is not utf-8: {e}")))?;
        let msa = Msa::parse_fasta(text, &alphabet)?;
        Ok(Sequestered::Natural { msa })
    }
}

/// Draws `n` rows from the target model that do not collide with any row
/// already claimed by an earlier alignment, re-sampling rejected rows in
/// fresh batches. Duplicates within one alignment are legitimate sampler
/// output and kept.
#[allow(clippy::too_many_arguments)]
fn sample_disjoint(
    params: &PottsParams,
    label: &str,
    n: usize,
    n_chains: usize,
    burn_in: usize,
    thin: usize,
    forbidden: &mut HashSet<Vec<u8>>,
    state: &mut RunState,
) -> Result<Msa> {
    let l = params.l();
    let mut rows: Vec<u8> = Vec::with_capacity(n * l);
    let mut have = 0usize;
    for batch in 0..MAX_RESAMPLE_BATCHES {
        if have == n {
            break;
        }
        let need = n - have;
        let seed = state.derive(&format!("stage1-{label}-batch{batch}"));
        let sample = gibbs_sample(params, need, n_chains.min(need), burn_in, thin, seed)?;
        for r in 0..sample.n_seqs() {
            if have == n {
                break;
            }
            let row = sample.row(r);
            if !forbidden.contains(row) {
                rows.extend_from_slice(row);
                have += 1;
            }
        }
    }
    if have < n {
        return Err(Error::InvalidArgument(format!(
            "could not draw {n} rows for '{label}' disjoint from earlier samples \
             within {MAX_RESAMPLE_BATCHES} batches; the model's support is too \
             small for disjoint alignments of this size"
        )));
    }
    for chunk in rows.chunks_exact(l) {
        forbidden.insert(chunk.to_vec());
    }
    let data = Array2::from_shape_vec((n, l), rows)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    let ids = (0..n).map(|i| format!("{label}{i}")).collect();
    Msa::from_codes(data, params.alphabet().clone(), ids)
}

/// Stage 2: filter (natural track) and split into disjoint train and target
/// alignments, then persist them.
fn stage_process(
    config: &PipelineConfig,
    state: &mut RunState,
    sequestered: Sequestered,
) -> Result<TrackData> {
    let track = match sequestered {
        Sequestered::Natural { msa } => {
            let filtered = match config.input.max_identity {
                Some(cutoff) => {
                    let seed = state.derive("stage2-filter");
                    msa.filter_by_identity(cutoff, seed)?
                }
                None => msa,
            };
            let seed = state.derive("stage2-split");
            let mut parts =
                filtered.split_disjoint(&[config.split.train, config.split.target], seed)?;
            let target = parts.pop().expect("two parts");
            let train = parts.pop().expect("two parts");
            TrackData {
                train,
                target,
                ceiling: None,
                target_params: None,
            }
        }
        Sequestered::Synthetic {
            params,
            train,
            target,
            ceiling,
        } => TrackData {
            train,
            target,
            ceiling: Some(ceiling),
            target_params: Some(params),
        },
    };

    assert_row_disjoint(&track.train, &track.target, "train", "target")?;
    if let Some(ceiling) = &track.ceiling {
        assert_row_disjoint(&track.train, ceiling, "train", "ceiling")?;
        assert_row_disjoint(&track.target, ceiling, "target", "ceiling")?;
    }

    state.write_artifact(
        "msas/train.fasta",
        STAGE_PROCESS,
        track.train.to_fasta().as_bytes(),
    )?;
    state.write_artifact(
        "msas/target.fasta",
        STAGE_PROCESS,
        track.target.to_fasta().as_bytes(),
    )?;
    if let Some(ceiling) = &track.ceiling {
        state.write_artifact(
            "msas/target_ceiling.fasta",
            STAGE_PROCESS,
            ceiling.to_fasta().as_bytes(),
        )?;
    }
    Ok(track)
}

/// Errors when the two alignments share any row, since a shared sequence
/// would let the models score their own training data.
fn assert_row_disjoint(a: &Msa, b: &Msa, a_name: &str, b_name: &str) -> Result<()> {
    let rows_a: HashSet<&[u8]> = (0..a.n_seqs()).map(|r| a.row(r)).collect();
    for r in 0..b.n_seqs() {
        if rows_a.contains(b.row(r)) {
            return Err(Error::InvalidArgument(format!(
                "alignments '{a_name}' and '{b_name}' share a sequence (row {r} of \
                 '{b_name}'); deduplicate or identity-filter the input"
            )));
        }
    }
    Ok(())
}

/// Summary statistics of a Potts fit, stored next to the parameters.
#[derive(Debug, Serialize, Deserialize)]
struct FitSummary {
    converged: bool,
    rounds: usize,
    final_residual: Option<f64>,
}

/// Stage 3: fit every rostered model on the training alignment.
fn stage_train(
    config: &PipelineConfig,
    state: &mut RunState,
    train: &Msa,
) -> Result<Vec<(String, FittedModel)>> {
    let mut models = Vec::new();
    for name in &config.models.roster {
        let fitted = match name.as_str() {
            "indep" => {
                let pc = config
                    .models
                    .indep
                    .pseudocount
                    .unwrap_or(1.0 / train.n_seqs() as f64);
                let params = fit_indep(train, pc)?;
                state.write_artifact(
                    "models/indep.json",
                    STAGE_TRAIN,
                    params.to_json()?.as_bytes(),
                )?;
                FittedModel::Indep(params)
            }
            "potts" => {
                let seed = state.derive("stage3-fit-potts");
                let fit_cfg = config.models.potts.to_fit_config(seed);
                let fit = fit_potts(train, &fit_cfg)?;
                state.write_artifact(
                    "models/potts.json",
                    STAGE_TRAIN,
                    fit.params.to_json()?.as_bytes(),
                )?;
                state.write_artifact(
                    "models/potts_history.csv",
                    STAGE_TRAIN,
                    fit.history_csv().as_bytes(),
                )?;
                let summary = FitSummary {
                    converged: fit.converged,
                    rounds: fit.history.len(),
                    final_residual: fit.history.last().map(|r| r.residual),
                };
                state.write_artifact(
                    "models/potts_fit.json",
                    STAGE_TRAIN,
                    serde_json::to_string_pretty(&summary)?.as_bytes(),
                )?;
                FittedModel::Potts(fit.params)
            }
            "svae" => {
                let arch = config
                    .models
                    .svae
                    .to_arch(train.seq_len(), train.alphabet().q());
                let seed = state.derive("stage3-fit-svae");
                let train_cfg = config.models.svae.to_train_config(seed);
                let training = train_vae(train, &arch, &train_cfg)?;
                state.write_artifact(
                    "models/svae.json",
                    STAGE_TRAIN,
                    training.params.to_json()?.as_bytes(),
                )?;
                state.write_artifact(
                    "models/svae_history.csv",
                    STAGE_TRAIN,
                    training.history_csv().as_bytes(),
                )?;
                FittedModel::Svae(training.params)
            }
            other => {
                return Err(Error::Config(format!("unknown model kind '{other}'")));
            }
        };
        models.push((name.clone(), fitted));
    }
    Ok(models)
}

/// Stage 4: draw one evaluation alignment per fitted model.
fn stage_generate(
    config: &PipelineConfig,
    state: &mut RunState,
    models: &[(String, FittedModel)],
) -> Result<Vec<(String, Msa)>> {
    let ev = &config.evaluation;
    let size = ev.size();
    let mut evals = Vec::new();
    for (name, model) in models {
        let seed = state.derive(&format!("stage4-sample-{name}"));
        let msa = match model {
            FittedModel::Indep(p) => sample_indep(p, size, seed)?,
            FittedModel::Potts(p) => gibbs_sample(
                p,
                size,
                ev.n_chains().min(size),
                ev.burn_in_sweeps(),
                ev.thin_sweeps(),
                seed,
            )?,
            FittedModel::Svae(p) => sample_vae(p, size, seed)?,
        };
        state.write_artifact(
            &format!("msas/eval_{name}.fasta"),
            STAGE_GENERATE,
            msa.to_fasta().as_bytes(),
        )?;
        evals.push((name.clone(), msa));
    }
    Ok(evals)
}

/// Stage 5: score every evaluation alignment against the target with the
/// rostered metrics and write one report per (model, metric).
fn stage_measure(
    config: &PipelineConfig,
    state: &mut RunState,
    track: &TrackData,
    models: &[(String, FittedModel)],
    evals: &[(String, Msa)],
) -> Result<()> {
    let target = &track.target;
    for metric in &config.metrics.roster {
        match metric.as_str() {
            "covariance" => {
                let target_cov = covariances_of(target, 0.0)?;
                for (name, eval) in evals {
                    let eval_cov = covariances_of(eval, 0.0)?;
                    let rho = covariance_correlation(&target_cov, &eval_cov)?;
                    let report = MetricReport::new(
                        "covariance",
                        MetricValue::Scalar(rho),
                        vec![
                            InputFingerprint::of_msa("target", target),
                            InputFingerprint::of_msa(&format!("eval_{name}"), eval),
                        ],
                        0,
                    );
                    state.write_artifact(
                        &format!("reports/covariance_{name}.json"),
                        STAGE_MEASURE,
                        report.to_json()?.as_bytes(),
                    )?;
                }
            }
            "r20" => {
                // one seed for every comparison so all models (and the
                // ceiling) are scored on the same position sets
                let seed = state.derive("stage5-r20");
                let max_order = config.metrics.r20_max_order(config.input.is_synthetic());
                let sets = config.metrics.r20_sets();
                let top_k = config.metrics.r20_top_k();
                let mut pairs: Vec<(&str, &Msa)> =
                    evals.iter().map(|(n, m)| (n.as_str(), m)).collect();
                if let Some(ceiling) = &track.ceiling {
                    pairs.push(("ceiling", ceiling));
                }
                for (name, eval) in pairs {
                    let detail = r20(target, eval, max_order, sets, top_k, seed)?;
                    state.write_artifact(
                        &format!("reports/r20_detail_{name}.json"),
                        STAGE_MEASURE,
                        detail.to_json()?.as_bytes(),
                    )?;
                    let means = detail.orders.iter().map(|o| o.mean_pearson).collect();
                    let report = MetricReport::new(
                        "r20",
                        MetricValue::Vector(means),
                        vec![
                            InputFingerprint::of_msa("target", target),
                            InputFingerprint::of_msa(&format!("eval_{name}"), eval),
                        ],
                        seed,
                    );
                    state.write_artifact(
                        &format!("reports/r20_{name}.json"),
                        STAGE_MEASURE,
                        report.to_json()?.as_bytes(),
                    )?;
                }
            }
            "hamming" => {
                let budget = Some(config.metrics.hamming_pair_budget());
                let target_seed = state.derive("stage5-hamming-target");
                let target_hist = target.hamming_distribution(budget, target_seed)?;
                state.write_artifact(
                    "reports/hamming_rescaled_target.csv",
                    STAGE_MEASURE,
                    rescale_loglog(&target_hist)?.to_csv().as_bytes(),
                )?;
                for (name, eval) in evals {
                    let seed = state.derive(&format!("stage5-hamming-{name}"));
                    let hist = eval.hamming_distribution(budget, seed)?;
                    let tvd = hamming_tvd(&target_hist, &hist)?;
                    let report = MetricReport::new(
                        "hamming",
                        MetricValue::Scalar(tvd),
                        vec![
                            InputFingerprint::of_msa("target", target),
                            InputFingerprint::of_msa(&format!("eval_{name}"), eval),
                        ],
                        seed,
                    );
                    state.write_artifact(
                        &format!("reports/hamming_{name}.json"),
                        STAGE_MEASURE,
                        report.to_json()?.as_bytes(),
                    )?;
                    state.write_artifact(
                        &format!("reports/hamming_rescaled_{name}.csv"),
                        STAGE_MEASURE,
                        rescale_loglog(&hist)?.to_csv().as_bytes(),
                    )?;
                }
            }
            "energy" => {
                let params = track.target_params.as_ref().ok_or_else(|| {
                    Error::Config("energy metric needs a synthetic target model".into())
                })?;
                let k = config.metrics.energy_sequences().min(target.n_seqs());
                let target_energies: Vec<f64> = (0..k)
                    .map(|r| potts_energy(params, target.row(r)))
                    .collect::<Result<_>>()?;
                for (name, model) in models {
                    let model_energies = model_energies(config, state, name, model, target, k)?;
                    let rho = energy_correlation(&target_energies, &model_energies)?;
                    let report = MetricReport::new(
                        "energy",
                        MetricValue::Scalar(rho),
                        vec![
                            InputFingerprint::of_msa("target", target),
                            InputFingerprint::of_bytes(
                                &format!("model_{name}"),
                                model.to_json()?.as_bytes(),
                            ),
                        ],
                        if matches!(model, FittedModel::Svae(_)) {
                            state.stage_seeds["stage5-energy-svae"]
                        } else {
                            0
                        },
                    );
                    state.write_artifact(
                        &format!("reports/energy_{name}.json"),
                        STAGE_MEASURE,
                        report.to_json()?.as_bytes(),
                    )?;
                    let mut csv = String::from("target_energy,model_energy\n");
                    for (t, m) in target_energies.iter().zip(&model_energies) {
                        csv.push_str(&format!("{t},{m}\n"));
                    }
                    state.write_artifact(
                        &format!("reports/energy_scatter_{name}.csv"),
                        STAGE_MEASURE,
                        csv.as_bytes(),
                    )?;
                }
            }
            other => {
                return Err(Error::Config(format!("unknown metric '{other}'")));
            }
        }
    }
    Ok(())
}

/// Scores the first `k` target rows under one model. Statistical energy is
/// the negative log-probability up to a constant, so the VAE estimators
/// enter with their sign flipped.
fn model_energies(
    config: &PipelineConfig,
    state: &mut RunState,
    name: &str,
    model: &FittedModel,
    target: &Msa,
    k: usize,
) -> Result<Vec<f64>> {
    match model {
        FittedModel::Indep(p) => (0..k).map(|r| energy_indep(p, target.row(r))).collect(),
        FittedModel::Potts(p) => (0..k).map(|r| potts_energy(p, target.row(r))).collect(),
        FittedModel::Svae(p) => {
            let base = state.derive(&format!("stage5-energy-{name}"));
            let n_samples = config.metrics.svae_energy_samples();
            let importance = config.metrics.svae_estimator() == "importance";
            (0..k)
                .map(|r| {
                    let seed = derive_seed(base, &format!("row{r}"));
                    let log_p = if importance {
                        log_prob_importance(p, target.row(r), n_samples, seed)?
                    } else {
                        elbo(p, target.row(r), n_samples, seed)?
                    };
                    Ok(-log_p)
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_roundtrips_and_rejects_unknown_version() {
        let config = PipelineConfig::from_toml(&config::tests::minimal_toml())
            .unwrap()
            .resolved();
        let manifest = RunManifest {
            version: MANIFEST_VERSION.to_string(),
            status: "complete".to_string(),
            config,
            inputs: vec![InputFingerprint::of_bytes("target_model", b"x")],
            stage_seeds: BTreeMap::from([("stage5-r20".to_string(), 42u64)]),
            artifacts: vec![ArtifactRecord {
                path: "msas/train.fasta".to_string(),
                sha256: "00".to_string(),
                stage: STAGE_PROCESS.to_string(),
            }],
        };
        let json = manifest.to_json().unwrap();
        let back = RunManifest::from_json(&json).unwrap();
        assert_eq!(back, manifest);
        assert!(back.artifact("msas/train.fasta").is_some());
        assert!(back.artifact("nope").is_none());

        let bad = json.replace(MANIFEST_VERSION, "gpsm-manifest-0");
        assert!(matches!(
            RunManifest::from_json(&bad),
            Err(Error::ModelFormat(_))
        ));
    }

    #[test]
    fn row_disjointness_check_fires_on_shared_rows() {
        let alphabet = Alphabet::new("AB", None).unwrap();
        let mk = |rows: &[[u8; 2]]| {
            let flat: Vec<u8> = rows.iter().flatten().copied().collect();
            let data = Array2::from_shape_vec((rows.len(), 2), flat).unwrap();
            let ids = (0..rows.len()).map(|i| format!("s{i}")).collect();
            Msa::from_codes(data, alphabet.clone(), ids).unwrap()
        };
        let a = mk(&[[0, 1], [1, 0]]);
        let b = mk(&[[1, 1], [0, 0]]);
        assert!(assert_row_disjoint(&a, &b, "train", "target").is_ok());
        let c = mk(&[[1, 0], [1, 1]]);
        let err = assert_row_disjoint(&a, &c, "train", "target").unwrap_err();
        assert!(err.to_string().contains("share a sequence"));
    }

    #[test]
    fn validate_pipeline_rejects_missing_input_as_config_error() {
        let toml = config::tests::minimal_toml().replace(
            "target_model = \"target.json\"",
            "target_model = \"/no/such/file\"",
        );
        let cfg = PipelineConfig::from_toml(&toml).unwrap();
        assert!(matches!(validate_pipeline(&cfg), Err(Error::Config(_))));
    }
}
