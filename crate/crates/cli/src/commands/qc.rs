use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;
use ulfsynth_core::curation::{
    apply_ratings, export_csv, flag_misregistration, import_csv, sentinel_score, PersistentStore, QCRecord,
};
use ulfsynth_core::labelharm::{filter_manifest, load_manifest, save_manifest, Selector};
use ulfsynth_core::volgrid::read_labels;

use crate::{write_json, CliError, Outcome, QcApplyArgs, QcCommand, QcExportArgs, QcFlagArgs, QcRateArgs};

pub fn run(cmd: QcCommand) -> Result<Outcome, CliError> {
    match cmd {
        QcCommand::Flag(a) => flag(a),
        QcCommand::Apply(a) => apply(a),
        QcCommand::Export(a) => export(a),
        QcCommand::Rate(a) => rate(a),
    }
}

#[derive(Deserialize)]
struct ScoreRow {
    subject_id: String,
    score: f64,
}

fn read_scores(path: &Path) -> Result<Vec<(String, f64)>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    reader
        .deserialize::<ScoreRow>()
        .enumerate()
        .map(|(i, r)| {
            r.map(|r| (r.subject_id, r.score))
                .map_err(|e| CliError::Config(format!("{}: row {}: {e}", path.display(), i + 2)))
        })
        .collect()
}

fn flag(args: QcFlagArgs) -> Result<Outcome, CliError> {
    let mut failed = 0;
    let scores = match (&args.scores, &args.manifest) {
        (Some(path), _) => read_scores(path)?,
        (None, Some(path)) => {
            let manifest = load_manifest(path)?;
            let results: Vec<_> = manifest
                .entries
                .par_iter()
                .map(|e| {
                    let pred = e
                        .prediction_path
                        .as_deref()
                        .ok_or_else(|| "no prediction_path in manifest".to_string())?;
                    let pred = read_labels(manifest.resolve(pred)).map_err(|m| m.to_string())?;
                    let gt = read_labels(manifest.resolve(&e.label_path)).map_err(|m| m.to_string())?;
                    sentinel_score(&e.subject_id, &pred, &gt, &args.sentinels).map_err(|m| m.to_string())
                })
                .collect();
            let mut scores = Vec::new();
            for (e, r) in manifest.entries.iter().zip(results) {
                match r {
                    Ok(s) => match s.score {
                        Some(v) => scores.push((s.subject_id, v)),
                        None => tracing::warn!(subject = %e.subject_id, "no sentinel label present in ground truth; not scored"),
                    },
                    Err(m) => {
                        tracing::error!(subject = %e.subject_id, "{m}");
                        failed += 1;
                    }
                }
            }
            scores
        }
        (None, None) => unreachable!("clap requires --manifest or --scores"),
    };
    let result = flag_misregistration(&scores, args.threshold)?;
    write_json(&args.out, &result)?;
    for id in result.suspects() {
        println!("{id}");
    }
    tracing::info!(
        threshold = result.threshold,
        suspects = result.suspects().count(),
        scored = result.subjects.len(),
        "flagging finished"
    );
    Ok(Outcome::from_failures(failed))
}

fn apply(args: QcApplyArgs) -> Result<Outcome, CliError> {
    let selector: Selector = args.select.parse()?;
    let manifest = load_manifest(&args.manifest)?;
    let store = import_csv(&args.ratings)?;
    let (rated, warnings) = apply_ratings(&manifest, &store);
    let filtered = filter_manifest(&rated, selector);
    for w in warnings.iter().chain(&filtered.warnings) {
        tracing::warn!("{w}");
    }
    let mut out = filtered.manifest;
    // Keep paths valid from the output manifest's location.
    for e in &mut out.entries {
        for p in [&mut e.image_path, &mut e.label_path] {
            let abs = manifest.resolve(p);
            *p = std::path::absolute(&abs).unwrap_or(abs).to_string_lossy().into_owned();
        }
        if let Some(p) = e.prediction_path.as_mut() {
            let abs = manifest.resolve(p);
            *p = std::path::absolute(&abs).unwrap_or(abs).to_string_lossy().into_owned();
        }
    }
    save_manifest(&out, &args.out)?;
    tracing::info!(kept = out.entries.len(), total = manifest.entries.len(), "manifest written");
    Ok(Outcome::Complete)
}

fn export(args: QcExportArgs) -> Result<Outcome, CliError> {
    let store = import_csv(&args.ratings)?;
    export_csv(&store, &args.out)?;
    Ok(Outcome::Complete)
}

fn rate(args: QcRateArgs) -> Result<Outcome, CliError> {
    let mut store = PersistentStore::open(&args.ratings)?;
    let timestamp = store.store().next_timestamp(&args.subject, &args.rater, chrono::Utc::now());
    let record = QCRecord {
        subject_id: args.subject,
        rating: args.rating.parse()?,
        affected_structures: args.structures,
        rater: args.rater,
        timestamp,
        note: args.note,
    };
    store.append(record)?;
    Ok(Outcome::Complete)
}
