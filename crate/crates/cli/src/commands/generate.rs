use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use ulfsynth_core::labelharm::load_manifest;
use ulfsynth_core::synthgen::{generate, replay, sample_seed, GeneratorConfig, Provenance, SynthSample};
use ulfsynth_core::volgrid::{read_labels, write_labels, write_volume, FloatPrecision, LabelMap};

use crate::{create_dir, resolve_config, write_json, CliError, GenerateArgs, Outcome};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";
pub const RUN_FILE: &str = "run.json";

/// Sidecar written next to every sample; enough to regenerate it.
#[derive(Debug, Serialize, Deserialize)]
pub struct SampleRecord {
    pub subject_id: String,
    pub label_path: PathBuf,
    pub epoch: u64,
    pub index: u64,
    pub provenance: Provenance,
}

#[derive(Debug, Serialize)]
struct Failure {
    subject_id: String,
    message: String,
}

#[derive(Debug, Serialize)]
struct RunRecord {
    command: &'static str,
    version: &'static str,
    dataset_seed: u64,
    epoch: u64,
    samples_per_subject: u64,
    resolution_enabled: bool,
    config: &'static str,
    outputs: Vec<String>,
    failures: Vec<Failure>,
}

fn load_config(args: &GenerateArgs) -> Result<GeneratorConfig, CliError> {
    let mut cfg = match resolve_config(args.config.as_deref(), "generate.toml")? {
        Some(path) => {
            tracing::info!(config = %path.display(), "loading generator config");
            GeneratorConfig::load(&path)?
        }
        None => GeneratorConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed.dataset_seed = seed;
    }
    if args.no_resolution {
        cfg.resolution.enabled = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn stem(subject: &str, epoch: u64, index: u64) -> String {
    format!("{subject}_e{epoch}_s{index:04}")
}

fn write_sample(dir: &Path, stem: &str, sample: &SynthSample, record: &SampleRecord) -> ulfsynth_core::Result<()> {
    write_volume(&sample.image, dir.join(format!("{stem}_image.nii.gz")), FloatPrecision::Single)?;
    write_labels(&sample.labels, dir.join(format!("{stem}_labels.nii.gz")))?;
    let path = dir.join(format!("{stem}_provenance.json"));
    let text = serde_json::to_string_pretty(record).expect("sample record serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| ulfsynth_core::Error::Io { path, source: e })
}

pub fn run(args: GenerateArgs) -> Result<Outcome, CliError> {
    if let Some(prov) = &args.replay {
        return run_replay(prov, args.labels.as_deref(), &args.out);
    }
    let cfg = load_config(&args)?;
    let manifest_path = args.manifest.as_ref().expect("clap requires --manifest without --replay");
    let manifest = load_manifest(manifest_path)?;
    let mut subjects: Vec<(String, PathBuf)> = Vec::new();
    for id in manifest.subject_ids() {
        if args.subjects.is_empty() || args.subjects.iter().any(|s| s == id) {
            let entry = manifest.entry(id).expect("listed subject has an entry");
            subjects.push((id.to_string(), manifest.resolve(&entry.label_path)));
        }
    }
    if let Some(unknown) = args.subjects.iter().find(|s| manifest.entry(s).is_none()) {
        return Err(CliError::Config(format!("subject `{unknown}` is not in the manifest")));
    }
    create_dir(&args.out)?;
    std::fs::write(args.out.join(RESOLVED_CONFIG_FILE), cfg.to_toml())
        .map_err(|e| CliError::Config(format!("cannot write config snapshot: {e}")))?;

    let results: Vec<(String, Result<Vec<String>, String>)> = subjects
        .par_iter()
        .map(|(id, label_path)| {
            let out = generate_subject(id, label_path, &args, &cfg).map_err(|e| {
                tracing::error!(subject = %id, error = %e, "generation failed");
                e.to_string()
            });
            (id.clone(), out)
        })
        .collect();

    let mut record = RunRecord {
        command: "generate",
        version: env!("CARGO_PKG_VERSION"),
        dataset_seed: cfg.seed.dataset_seed,
        epoch: args.epoch,
        samples_per_subject: args.samples,
        resolution_enabled: cfg.resolution.enabled,
        config: RESOLVED_CONFIG_FILE,
        outputs: Vec::new(),
        failures: Vec::new(),
    };
    for (id, r) in results {
        match r {
            Ok(stems) => record.outputs.extend(stems),
            Err(message) => record.failures.push(Failure { subject_id: id, message }),
        }
    }
    write_json(&args.out.join(RUN_FILE), &record)?;
    tracing::info!(samples = record.outputs.len(), failed = record.failures.len(), "generation finished");
    Ok(Outcome::from_failures(record.failures.len()))
}

fn generate_subject(id: &str, label_path: &Path, args: &GenerateArgs, cfg: &GeneratorConfig) -> ulfsynth_core::Result<Vec<String>> {
    let labels = read_labels(label_path)?;
    let dir = args.out.join(id);
    std::fs::create_dir_all(&dir).map_err(|e| ulfsynth_core::Error::Io { path: dir.clone(), source: e })?;
    (0..args.samples)
        .into_par_iter()
        .map(|index| {
            let seed = sample_seed(cfg.seed.dataset_seed, id, args.epoch, index);
            let sample = generate(&labels, seed, cfg)?;
            let stem = stem(id, args.epoch, index);
            let record = SampleRecord {
                subject_id: id.to_string(),
                label_path: std::path::absolute(label_path).unwrap_or_else(|_| label_path.to_path_buf()),
                epoch: args.epoch,
                index,
                provenance: sample.provenance.clone(),
            };
            write_sample(&dir, &stem, &sample, &record)?;
            tracing::debug!(subject = id, index, seed, "sample written");
            Ok(format!("{id}/{stem}"))
        })
        .collect()
}

fn run_replay(prov_path: &Path, labels: Option<&Path>, out: &Path) -> Result<Outcome, CliError> {
    let text = std::fs::read_to_string(prov_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", prov_path.display())))?;
    let record: SampleRecord = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: not a sample provenance file: {e}", prov_path.display())))?;
    let label_path = labels.map(Path::to_path_buf).unwrap_or_else(|| record.label_path.clone());
    let source: LabelMap = read_labels(&label_path)?;
    let sample = replay(&source, &record.provenance)?;
    create_dir(out)?;
    let stem = stem(&record.subject_id, record.epoch, record.index);
    write_sample(out, &stem, &sample, &record)?;
    tracing::info!(sample = %stem, "replayed");
    Ok(Outcome::Complete)
}
