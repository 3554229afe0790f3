//! Command-line front end: model fitting, sampling, scoring, the metric
//! suite, and the end-to-end pipeline runner.
//!
//! Exit codes: 0 on success, 2 for configuration errors (including bad
//! usage), 3 for runtime failures such as an aborted pipeline stage.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gpsm::indep::{energy_indep, fit_indep, sample_indep, IndepParams};
use gpsm::metrics::{r20, InputFingerprint, MetricReport, MetricValue};
use gpsm::pipeline::{run_pipeline, validate_pipeline, PipelineConfig};
use gpsm::vae::{elbo, log_prob_importance, VaeArch, VaeParams};
use gpsm::{
    covariance_correlation, energy_correlation, extrapolate_msa_size, fit_potts, gibbs_sample,
    hamming_tvd, potts_energy, sample_vae, train_vae, Alphabet, Error, FitConfig, Msa, PottsParams,
    Result, TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "gpsm",
    version,
    about = "Generative probability models for sequence alignments",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline described by a TOML configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check a configuration, including its input files, without running.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit the site-independent model to an alignment.
    FitIndep {
        #[command(flatten)]
        input: MsaInput,
        /// Frequency smoothing; defaults to 1/N of the alignment.
        #[arg(long)]
        pseudocount: Option<f64>,
        /// Where to write the model JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the pairwise Potts model by MCMC marginal matching.
    FitPotts(FitPottsArgs),
    /// Train the dense variational autoencoder.
    FitVae(FitVaeArgs),
    /// Draw sequences from a stored model of any kind.
    Sample {
        /// Stored model JSON (site-independent, Potts, or VAE).
        #[arg(long)]
        model: PathBuf,
        /// Number of sequences to draw.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output FASTA path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Gibbs chains (Potts models only).
        #[arg(long, default_value_t = 256)]
        chains: usize,
        /// Burn-in sweeps per chain (Potts models only).
        #[arg(long, default_value_t = 500)]
        burn_in: usize,
        /// Sweeps between emitted samples (Potts models only).
        #[arg(long, default_value_t = 10)]
        thin: usize,
    },
    /// Score sequences under a stored model; writes CSV (id, energy).
    Energy {
        /// Stored model JSON (site-independent, Potts, or VAE).
        #[arg(long)]
        model: PathBuf,
        /// FASTA of sequences to score, read in the model's alphabet.
        #[arg(long)]
        msa: PathBuf,
        /// Likelihood estimator for VAE models.
        #[arg(long, value_enum, default_value_t = Estimator::Importance)]
        estimator: Estimator,
        /// Monte Carlo samples per sequence for VAE models.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generative capacity metrics comparing two alignments.
    #[command(subcommand)]
    Metric(MetricCommand),
}

/// An input alignment plus the alphabet to read it in.
#[derive(Args)]
struct MsaInput {
    /// Training alignment in FASTA format.
    #[arg(long)]
    msa: PathBuf,
    /// Alphabet: "protein" or a literal symbol string ('-' = gap).
    #[arg(long, default_value = "protein")]
    alphabet: String,
}

#[derive(Args)]
struct FitPottsArgs {
    #[command(flatten)]
    input: MsaInput,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the convergence history CSV (round, residual, gamma).
    #[arg(long)]
    history: Option<PathBuf>,
    /// Marginal smoothing; defaults to 1/N of the alignment.
    #[arg(long)]
    pseudocount: Option<f64>,
    /// Coupling penalty scale.
    #[arg(long)]
    lambda: Option<f64>,
    /// Penalty taper width.
    #[arg(long)]
    scad_a: Option<f64>,
    /// Initial gradient step size.
    #[arg(long)]
    step_size: Option<f64>,
    /// Damping of the running marginal estimate, in [0, 1).
    #[arg(long)]
    damping: Option<f64>,
    /// Persistent Gibbs chains.
    #[arg(long)]
    chains: Option<usize>,
    /// Sweeps per chain per round.
    #[arg(long)]
    steps_per_round: Option<usize>,
    #[arg(long)]
    max_rounds: Option<usize>,
    /// Convergence threshold on the squared bivariate residuals.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FitVaeArgs {
    #[command(flatten)]
    input: MsaInput,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the loss history CSV (epoch, train_loss, val_loss).
    #[arg(long)]
    history: Option<PathBuf>,
    /// Hidden layer widths, e.g. 250,250,250; defaults scale with L.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Batch-normalize the middle encoder layer.
    #[arg(long)]
    batch_norm: Option<bool>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Fraction of sequences held out for validation loss.
    #[arg(long)]
    validation_fraction: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Estimator {
    Elbo,
    Importance,
}

#[derive(Subcommand)]
enum MetricCommand {
    /// Pearson correlation of pairwise covariance tables.
    Covariance {
        #[command(flatten)]
        pair: MetricPair,
        /// Frequency smoothing applied to both tables.
        #[arg(long, default_value_t = 0.0)]
        pseudocount: f64,
        #[command(flatten)]
        output: MetricOutput,
    },
    /// Mean Pearson correlation of top higher-order marginals, by order.
    R20 {
        #[command(flatten)]
        pair: MetricPair,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Position sets sampled per order.
        #[arg(long, default_value_t = 3000)]
        sets: usize,
        #[arg(long, default_value_t = 10)]
        max_order: usize,
        /// Top subsequences ranked per set.
        #[arg(long, default_value_t = 20)]
        top_k: usize,
        /// Where to write the full per-order report JSON.
        #[arg(long)]
        detail: Option<PathBuf>,
        #[command(flatten)]
        output: MetricOutput,
    },
    /// Total variation distance between pairwise Hamming distributions.
    Hamming {
        #[command(flatten)]
        pair: MetricPair,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sequence pairs sampled per alignment.
        #[arg(long, default_value_t = 100_000)]
        pair_budget: u64,
        #[command(flatten)]
        output: MetricOutput,
    },
    /// Pearson correlation of two energy tables (CSV, value in the last
    /// column, as written by `gpsm energy`).
    Energy {
        /// Reference energies CSV.
        #[arg(long)]
        target: PathBuf,
        /// Model energies CSV over the same sequences, same order.
        #[arg(long)]
        eval: PathBuf,
        #[command(flatten)]
        output: MetricOutput,
    },
    /// Alignment size needed to reach a target r20 correlation.
    Extrapolate {
        /// Reference alignment size.
        #[arg(long)]
        n0: u64,
        /// Correlation observed at n0.
        #[arg(long)]
        rho: f64,
        /// Correlation to reach.
        #[arg(long)]
        rho_target: f64,
    },
}

/// The two alignments a comparison metric consumes.
#[derive(Args)]
struct MetricPair {
    /// Reference alignment (FASTA).
    #[arg(long)]
    target: PathBuf,
    /// Model-generated alignment (FASTA).
    #[arg(long)]
    eval: PathBuf,
    /// Alphabet both alignments are read in.
    #[arg(long, default_value = "protein")]
    alphabet: String,
}

#[derive(Args)]
struct MetricOutput {
    /// Where to write the report JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the report as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read '{}': {e}", path.display())))
}

fn load_msa(input: &MsaInput) -> Result<Msa> {
    let alphabet = Alphabet::from_spec(&input.alphabet)?;
    Msa::parse_fasta(&read_to_string(&input.msa)?, &alphabet)
}

fn load_msa_pair(pair: &MetricPair) -> Result<(Msa, Msa)> {
    let alphabet = Alphabet::from_spec(&pair.alphabet)?;
    let target = Msa::parse_fasta(&read_to_string(&pair.target)?, &alphabet)?;
    let eval = Msa::parse_fasta(&read_to_string(&pair.eval)?, &alphabet)?;
    Ok((target, eval))
}

/// A stored model of any of the three families, dispatched on the version
/// tag inside the JSON.
enum AnyModel {
    Indep(IndepParams),
    Potts(PottsParams),
    Svae(VaeParams),
}

impl AnyModel {
    fn load(path: &Path) -> Result<AnyModel> {
        let text = read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        match value.get("version").and_then(|v| v.as_str()) {
            Some("indep-1") => Ok(AnyModel::Indep(IndepParams::from_json(&text)?)),
            Some("potts-1") => Ok(AnyModel::Potts(PottsParams::from_json(&text)?)),
            Some("svae-1") => Ok(AnyModel::Svae(VaeParams::from_json(&text)?)),
            other => Err(Error::ModelFormat(format!(
                "'{}' has unrecognized model version {:?}",
                path.display(),
                other.unwrap_or("missing")
            ))),
        }
    }

    fn alphabet(&self) -> &Alphabet {
        match self {
            AnyModel::Indep(p) => p.alphabet(),
            AnyModel::Potts(p) => p.alphabet(),
            AnyModel::Svae(p) => p.alphabet(),
        }
    }
}

/// Prints to stdout, treating a closed pipe (e.g. `| head`) as success.
fn print_stdout(text: &str) -> Result<()> {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => other.map_err(Error::from),
    }
}

fn write_or_print(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text)?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        None => print_stdout(text),
    }
}

fn emit_metric_report(report: &MetricReport, output: &MetricOutput) -> Result<()> {
    write_or_print(&output.out, &report.to_json()?)?;
    if let Some(path) = &output.csv {
        fs::write(path, report.to_csv())?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

/// Reads one number per data row from a CSV, taking the last column and
/// skipping a leading header row if present.
fn read_energy_csv(path: &Path) -> Result<Vec<f64>> {
    let text = read_to_string(path)?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or(line);
        match field.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if i == 0 => {} // header row
            Err(_) => {
                return Err(Error::Parse(format!(
                    "'{}' line {}: bad number '{field}'",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(values)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config } => {
            let text = fs::read_to_string(&config)
                .map_err(|e| Error::Config(format!("cannot read '{}': {e}", config.display())))?;
            let mut cfg = PipelineConfig::from_toml(&text)?;
            cfg.apply_env_overrides()?;
            let manifest = run_pipeline(&cfg)?;
            print_stdout(&format!(
                "run complete: {} artifacts under {}\nmanifest: {}/manifest.json",
                manifest.artifacts.len(),
                manifest.config.output_dir,
                manifest.config.output_dir
            ))
        }
        Command::Validate { config } => {
            let text = fs::read_to_string(&config)
                .map_err(|e| Error::Config(format!("cannot read '{}': {e}", config.display())))?;
            let mut cfg = PipelineConfig::from_toml(&text)?;
            cfg.apply_env_overrides()?;
            let report = validate_pipeline(&cfg)?;
            print_stdout(&serde_json::to_string_pretty(&report)?)?;
            eprintln!("config ok");
            Ok(())
        }
        Command::FitIndep {
            input,
            pseudocount,
            out,
        } => {
            let msa = load_msa(&input)?;
            let pc = pseudocount.unwrap_or(1.0 / msa.n_seqs() as f64);
            let params = fit_indep(&msa, pc)?;
            fs::write(&out, params.to_json()?)?;
            eprintln!("wrote {}", out.display());
            Ok(())
        }
        Command::FitPotts(args) => {
            let msa = load_msa(&args.input)?;
            let d = FitConfig::default();
            let config = FitConfig {
                pseudocount: args.pseudocount.or(d.pseudocount),
                lambda: args.lambda.unwrap_or(d.lambda),
                scad_a: args.scad_a.unwrap_or(d.scad_a),
                step_size: args.step_size.unwrap_or(d.step_size),
                damping: args.damping.unwrap_or(d.damping),
                n_chains: args.chains.unwrap_or(d.n_chains),
                steps_per_round: args.steps_per_round.unwrap_or(d.steps_per_round),
                max_rounds: args.max_rounds.unwrap_or(d.max_rounds),
                convergence_tol: args.tol.unwrap_or(d.convergence_tol),
                seed: args.seed,
            };
            let fit = fit_potts(&msa, &config)?;
            fs::write(&args.out, fit.params.to_json()?)?;
            eprintln!("wrote {}", args.out.display());
            if let Some(path) = &args.history {
                fs::write(path, fit.history_csv())?;
                eprintln!("wrote {}", path.display());
            }
            eprintln!(
                "{} after {} rounds",
                if fit.converged {
                    "converged"
                } else {
                    "round limit reached"
                },
                fit.history.len()
            );
            Ok(())
        }
        Command::FitVae(args) => {
            let msa = load_msa(&args.input)?;
            let base = VaeArch::desk_scale(msa.seq_len(), msa.alphabet().q());
            let arch = VaeArch {
                hidden_widths: args.hidden.unwrap_or(base.hidden_widths),
                latent_dim: args.latent_dim.unwrap_or(base.latent_dim),
                dropout_rate: args.dropout.unwrap_or(base.dropout_rate),
                use_batch_norm: args.batch_norm.unwrap_or(base.use_batch_norm),
                ..base
            };
            let d = TrainConfig::default();
            let config = TrainConfig {
                epochs: args.epochs.unwrap_or(d.epochs),
                batch_size: args.batch_size.unwrap_or(d.batch_size),
                validation_fraction: args.validation_fraction.unwrap_or(d.validation_fraction),
                learning_rate: args.learning_rate.unwrap_or(d.learning_rate),
                seed: args.seed,
                ..d
            };
            let training = train_vae(&msa, &arch, &config)?;
            fs::write(&args.out, training.params.to_json()?)?;
            eprintln!("wrote {}", args.out.display());
            if let Some(path) = &args.history {
                fs::write(path, training.history_csv())?;
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Sample {
            model,
            n,
            seed,
            out,
            chains,
            burn_in,
            thin,
        } => {
            let msa = match AnyModel::load(&model)? {
                AnyModel::Indep(p) => sample_indep(&p, n, seed)?,
                AnyModel::Potts(p) => gibbs_sample(&p, n, chains.min(n), burn_in, thin, seed)?,
                AnyModel::Svae(p) => sample_vae(&p, n, seed)?,
            };
            write_or_print(&out, msa.to_fasta().trim_end())
        }
        Command::Energy {
            model,
            msa,
            estimator,
            samples,
            seed,
            out,
        } => {
            let model = AnyModel::load(&model)?;
            let seqs = Msa::parse_fasta(&read_to_string(&msa)?, model.alphabet())?;
            let mut csv = String::from("id,energy\n");
            for r in 0..seqs.n_seqs() {
                let row = seqs.row(r);
                let energy = match &model {
                    AnyModel::Indep(p) => energy_indep(p, row)?,
                    AnyModel::Potts(p) => potts_energy(p, row)?,
                    AnyModel::Svae(p) => {
                        let row_seed = gpsm::rng::derive_seed(seed, &format!("row{r}"));
                        let log_p = match estimator {
                            Estimator::Elbo => elbo(p, row, samples, row_seed)?,
                            Estimator::Importance => {
                                log_prob_importance(p, row, samples, row_seed)?
                            }
                        };
                        -log_p
                    }
                };
                csv.push_str(&format!("{},{energy}\n", seqs.ids()[r]));
            }
            write_or_print(&out, csv.trim_end())
        }
        Command::Metric(metric) => dispatch_metric(metric),
    }
}

fn dispatch_metric(metric: MetricCommand) -> Result<()> {
    match metric {
        MetricCommand::Covariance {
            pair,
            pseudocount,
            output,
        } => {
            let (target, eval) = load_msa_pair(&pair)?;
            let a = gpsm::marginals::covariances_of(&target, pseudocount)?;
            let b = gpsm::marginals::covariances_of(&eval, pseudocount)?;
            let rho = covariance_correlation(&a, &b)?;
            let report = MetricReport::new(
                "covariance",
                MetricValue::Scalar(rho),
                vec![
                    InputFingerprint::of_msa("target", &target),
                    InputFingerprint::of_msa("eval", &eval),
                ],
                0,
            );
            emit_metric_report(&report, &output)
        }
        MetricCommand::R20 {
            pair,
            seed,
            sets,
            max_order,
            top_k,
            detail,
            output,
        } => {
            let (target, eval) = load_msa_pair(&pair)?;
            let full = r20(&target, &eval, max_order, sets, top_k, seed)?;
            if let Some(path) = &detail {
                fs::write(path, full.to_json()?)?;
                eprintln!("wrote {}", path.display());
            }
            let means = full.orders.iter().map(|o| o.mean_pearson).collect();
            let report = MetricReport::new(
                "r20",
                MetricValue::Vector(means),
                vec![
                    InputFingerprint::of_msa("target", &target),
                    InputFingerprint::of_msa("eval", &eval),
                ],
                seed,
            );
            emit_metric_report(&report, &output)
        }
        MetricCommand::Hamming {
            pair,
            seed,
            pair_budget,
            output,
        } => {
            let (target, eval) = load_msa_pair(&pair)?;
            let target_hist = target
                .hamming_distribution(Some(pair_budget), gpsm::rng::derive_seed(seed, "target"))?;
            let eval_hist =
                eval.hamming_distribution(Some(pair_budget), gpsm::rng::derive_seed(seed, "eval"))?;
            let tvd = hamming_tvd(&target_hist, &eval_hist)?;
            let report = MetricReport::new(
                "hamming",
                MetricValue::Scalar(tvd),
                vec![
                    InputFingerprint::of_msa("target", &target),
                    InputFingerprint::of_msa("eval", &eval),
                ],
                seed,
            );
            emit_metric_report(&report, &output)
        }
        MetricCommand::Energy {
            target,
            eval,
            output,
        } => {
            let target_energies = read_energy_csv(&target)?;
            let eval_energies = read_energy_csv(&eval)?;
            let rho = energy_correlation(&target_energies, &eval_energies)?;
            let report = MetricReport::new(
                "energy",
                MetricValue::Scalar(rho),
                vec![
                    InputFingerprint::of_bytes("target", fs::read(&target)?.as_slice()),
                    InputFingerprint::of_bytes("eval", fs::read(&eval)?.as_slice()),
                ],
                0,
            );
            emit_metric_report(&report, &output)
        }
        MetricCommand::Extrapolate {
            n0,
            rho,
            rho_target,
        } => {
            let n = extrapolate_msa_size(n0, rho, rho_target)?;
            print_stdout(
                &serde_json::json!({
                    "n0": n0,
                    "rho": rho,
                    "rho_target": rho_target,
                    "n_required": n,
                })
                .to_string(),
            )
        }
    }
}
