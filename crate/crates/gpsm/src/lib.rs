//! Generative probability models for categorical sequence alignments.
//!
//! The crate fits three model families to a multiple sequence alignment
//! (a site-independent baseline, a pairwise Potts model inferred by MCMC
//! marginal matching, and a dense variational autoencoder), generates
//! synthetic alignments from each, and scores how well the synthetic data
//! reproduce the statistics of the source with a four-metric suite
//! (covariance correlation, higher-order marginal r20 curves, Hamming
//! distance distributions, statistical-energy correlation).
//!
//! Everything is seeded and bit-reproducible: rerunning any operation with
//! the same inputs and seed produces identical bytes.

pub mod alphabet;
pub mod error;
pub mod indep;
pub mod marginals;
pub mod metrics;
pub mod msa;
pub mod pipeline;
pub mod potts;
pub mod rng;
pub mod stats;
pub mod vae;

pub use alphabet::Alphabet;
pub use error::{Error, Result};
pub use metrics::{
    covariance_correlation, energy_correlation, extrapolate_msa_size, hamming_tvd, r20,
    rescale_loglog, MetricReport, MetricValue, R20Report,
};
pub use msa::{DistanceHistogram, Msa};
pub use pipeline::{
    emit_report, run_pipeline, validate_pipeline, PipelineConfig, ReportFormat, RunManifest,
};
pub use potts::{fit_potts, gibbs_sample, potts_energy, FitConfig, PottsFit, PottsParams};
pub use vae::{batch_loss_and_grad, sample_vae, train_vae, TrainConfig, VaeArch, VaeParams};
