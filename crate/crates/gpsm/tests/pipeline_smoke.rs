//! End-to-end pipeline runs at toy scale: both input tracks, rerun
//! reproducibility, early validation failures, and the flagged partial
//! manifest a stage failure leaves behind.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use gpsm::pipeline::SummaryDoc;
use gpsm::rng::sha256_hex;
use gpsm::{
    gibbs_sample, run_pipeline, validate_pipeline, Alphabet, Error, MetricReport, PipelineConfig,
    PottsParams,
};

/// A small coupled target model: mild site fields plus one coupling between
/// the first two sites. Kept diffuse so its support dwarfs the row counts
/// drawn from it and disjoint sampling stays cheap.
fn toy_target(l: usize, q: usize) -> PottsParams {
    let symbols: String = "ABCDEFGH"[..q].to_string();
    let alphabet = Alphabet::new(&symbols, None).unwrap();
    let h = Array2::from_shape_fn((l, q), |(i, a)| 0.2 * ((i + 2 * a) % 3) as f64 - 0.1);
    let n_pairs = l * (l - 1) / 2;
    let mut j = vec![Array2::zeros((q, q)); n_pairs];
    // pair (0, 1) is the first in i<j order; favor matching states there
    j[0] = Array2::from_shape_fn((q, q), |(a, b)| if a == b { -0.5 } else { 0.1 });
    PottsParams::new(h, j, alphabet).unwrap()
}

fn write_target_model(dir: &Path) -> String {
    let params = toy_target(10, 4);
    let path = dir.join("target.json");
    fs::write(&path, params.to_json().unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn synthetic_toml(target_model: &str, out_dir: &str) -> String {
    format!(
        r#"
schema = "gpsm-run-1"
seed = 11
output_dir = "{out_dir}"

[input]
target_model = "{target_model}"

[split]
train = 250
target = 250

[models]
roster = ["indep", "potts", "svae"]

[models.potts]
n_chains = 64
steps_per_round = 4
max_rounds = 10
convergence_tol = 0.5

[models.svae]
hidden_widths = [12, 12, 12]
latent_dim = 2
epochs = 2
batch_size = 50

[evaluation]
size = 300
n_chains = 64
burn_in_sweeps = 60
thin_sweeps = 3

[metrics]
roster = ["covariance", "r20", "hamming", "energy"]
r20_sets = 25
r20_max_order = 3
r20_top_k = 5
hamming_pair_budget = 4000
energy_sequences = 40
svae_energy_samples = 6
"#
    )
}

/// Hash every artifact file and check it against its manifest record.
fn verify_artifact_hashes(out_dir: &Path, manifest_json: &str) {
    let manifest = gpsm::RunManifest::from_json(manifest_json).unwrap();
    assert!(!manifest.artifacts.is_empty());
    for artifact in &manifest.artifacts {
        let mut path = out_dir.to_path_buf();
        for part in artifact.path.split('/') {
            path.push(part);
        }
        let bytes = fs::read(&path)
            .unwrap_or_else(|e| panic!("artifact '{}' unreadable: {e}", artifact.path));
        assert_eq!(
            sha256_hex(&bytes),
            artifact.sha256,
            "artifact '{}' does not match its recorded hash",
            artifact.path
        );
    }
}

#[test]
fn synthetic_run_emits_reports_and_reruns_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let target_model = write_target_model(dir.path());
    let out_dir = dir.path().join("run");
    let toml = synthetic_toml(&target_model, out_dir.to_str().unwrap());
    let config = PipelineConfig::from_toml(&toml).unwrap();

    let manifest = run_pipeline(&config).unwrap();
    assert_eq!(manifest.status, "complete");

    // one report per (model, metric), plus the target-sample r20 bound
    for model in ["indep", "potts", "svae"] {
        for metric in ["covariance", "r20", "hamming", "energy"] {
            let rel = format!("reports/{metric}_{model}.json");
            assert!(manifest.artifact(&rel).is_some(), "missing {rel}");
            let text = fs::read_to_string(out_dir.join(&rel)).unwrap();
            let report = MetricReport::from_json(&text).unwrap();
            assert_eq!(report.metric, metric);
        }
    }
    assert!(manifest.artifact("reports/r20_ceiling.json").is_some());
    assert!(manifest.artifact("msas/target_ceiling.fasta").is_some());

    // aggregates in all three formats
    let summary_text = fs::read_to_string(out_dir.join("reports/summary.json")).unwrap();
    let summary = SummaryDoc::from_json(&summary_text).unwrap();
    assert_eq!(summary.models.len(), 3);
    for (_, model) in &summary.models {
        assert!(model.covariance_correlation.is_some());
        assert!(model.r20.is_some());
        assert!(model.hamming_tvd.is_some());
        assert!(model.energy_correlation.is_some());
    }
    assert!(summary.ceiling_r20.is_some());
    assert!(out_dir.join("reports/summary.csv").is_file());
    for figure in ["r20.svg", "hamming.svg", "energy.svg"] {
        assert!(out_dir.join("figures").join(figure).is_file());
    }

    // train, target, and ceiling share no sequence
    let manifest_json_1 = fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    verify_artifact_hashes(&out_dir, &manifest_json_1);
    assert!(out_dir.join("timings.json").is_file());

    // a second run of the same config reproduces the manifest byte for
    // byte and clears any partial manifest a failed earlier run left
    fs::write(out_dir.join("manifest.partial.json"), b"{}").unwrap();
    let manifest2 = run_pipeline(&config).unwrap();
    let manifest_json_2 = fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    assert_eq!(manifest_json_1, manifest_json_2);
    assert_eq!(manifest, manifest2);
    assert!(!out_dir.join("manifest.partial.json").exists());
    verify_artifact_hashes(&out_dir, &manifest_json_2);
}

#[test]
fn natural_run_works_from_fasta_without_ceiling() {
    let dir = tempfile::tempdir().unwrap();
    let params = toy_target(6, 3);
    let msa = gibbs_sample(&params, 260, 64, 60, 3, 99).unwrap();
    let fasta_path = dir.path().join("input.fasta");
    fs::write(&fasta_path, msa.to_fasta()).unwrap();
    let out_dir = dir.path().join("run");

    let toml = format!(
        r#"
schema = "gpsm-run-1"
seed = 5
output_dir = "{}"

[input]
fasta = "{}"
alphabet = "ABC"
max_identity = 0.95

[split]
train = 90
target = 90

[models]
roster = ["indep"]

[evaluation]
size = 200

[metrics]
roster = ["covariance", "r20", "hamming"]
r20_sets = 20
r20_max_order = 3
r20_top_k = 5
hamming_pair_budget = 3000
"#,
        out_dir.to_str().unwrap(),
        fasta_path.to_str().unwrap()
    );
    let config = PipelineConfig::from_toml(&toml).unwrap();
    let report = validate_pipeline(&config).unwrap();
    assert_eq!(report.track, "natural");
    assert_eq!(report.input_rows, Some(260));
    assert_eq!((report.seq_len, report.q), (6, 3));

    let manifest = run_pipeline(&config).unwrap();
    assert_eq!(manifest.status, "complete");
    assert!(manifest.artifact("reports/covariance_indep.json").is_some());
    assert!(manifest.artifact("reports/r20_ceiling.json").is_none());
    assert!(manifest.artifact("msas/target_ceiling.fasta").is_none());
    assert!(manifest.stage_seeds.contains_key("stage2-filter"));
    assert!(manifest.stage_seeds.contains_key("stage2-split"));

    let summary_text = fs::read_to_string(out_dir.join("reports/summary.json")).unwrap();
    let summary = SummaryDoc::from_json(&summary_text).unwrap();
    assert!(summary.ceiling_r20.is_none());
    assert!(summary.models["indep"].energy_correlation.is_none());
}

#[test]
fn bad_configs_fail_before_any_compute() {
    let dir = tempfile::tempdir().unwrap();
    let params = toy_target(6, 3);
    let msa = gibbs_sample(&params, 40, 16, 30, 2, 1).unwrap();
    let fasta_path = dir.path().join("input.fasta");
    fs::write(&fasta_path, msa.to_fasta()).unwrap();
    let out_dir = dir.path().join("never_created");

    // split sizes exceeding the available rows fail validation, not a stage
    let toml = format!(
        r#"
schema = "gpsm-run-1"
seed = 1
output_dir = "{}"

[input]
fasta = "{}"
alphabet = "ABC"

[split]
train = 30
target = 30

[models]
roster = ["indep"]

[metrics]
roster = ["covariance"]
"#,
        out_dir.to_str().unwrap(),
        fasta_path.to_str().unwrap()
    );
    let config = PipelineConfig::from_toml(&toml).unwrap();
    let err = run_pipeline(&config).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "got {err}");
    assert!(
        !out_dir.exists(),
        "validation failure must not write anything"
    );

    // the energy metric needs a target model to define reference energies
    let toml2 = toml
        .replace("roster = [\"covariance\"]", "roster = [\"energy\"]")
        .replace("train = 30", "train = 15")
        .replace("target = 30", "target = 15");
    let config2 = PipelineConfig::from_toml(&toml2).unwrap();
    assert!(matches!(validate_pipeline(&config2), Err(Error::Config(_))));

    // natural-track default r20 order (7) exceeds this L=6 input
    let toml3 = toml
        .replace("roster = [\"covariance\"]", "roster = [\"r20\"]")
        .replace("train = 30", "train = 15")
        .replace("target = 30", "target = 15");
    let config3 = PipelineConfig::from_toml(&toml3).unwrap();
    let err = validate_pipeline(&config3).unwrap_err();
    assert!(err.to_string().contains("r20_max_order"), "got {err}");
}

#[test]
fn exhausted_disjoint_sampling_leaves_flagged_partial_manifest() {
    // L=2, q=2 has only four possible sequences; after train and target
    // claim them all, the ceiling sample cannot be row-disjoint.
    let dir = tempfile::tempdir().unwrap();
    let alphabet = Alphabet::new("AB", None).unwrap();
    let params =
        PottsParams::new(Array2::zeros((2, 2)), vec![Array2::zeros((2, 2))], alphabet).unwrap();
    let target_model = dir.path().join("target.json");
    fs::write(&target_model, params.to_json().unwrap()).unwrap();
    let out_dir = dir.path().join("run");

    let toml = format!(
        r#"
schema = "gpsm-run-1"
seed = 3
output_dir = "{}"

[input]
target_model = "{}"

[split]
train = 3
target = 3

[models]
roster = ["indep"]

[evaluation]
size = 50
n_chains = 4
burn_in_sweeps = 20
thin_sweeps = 2

[metrics]
roster = ["covariance"]
"#,
        out_dir.to_str().unwrap(),
        target_model.to_str().unwrap()
    );
    let config = PipelineConfig::from_toml(&toml).unwrap();
    let err = run_pipeline(&config).unwrap_err();
    match &err {
        Error::Stage { stage, .. } => assert_eq!(stage, "stage1_sequester"),
        other => panic!("expected a stage failure, got {other}"),
    }

    let partial =
        fs::read_to_string(out_dir.join("manifest.partial.json")).expect("partial manifest");
    let manifest = gpsm::RunManifest::from_json(&partial).unwrap();
    assert_eq!(manifest.status, "failed: stage1_sequester");
    assert!(out_dir.join("timings.json").is_file());
    assert!(!out_dir.join("manifest.json").exists());
}
