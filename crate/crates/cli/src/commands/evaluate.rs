use std::collections::HashMap;

use rayon::prelude::*;
use ulfsynth_core::labelharm::{load_manifest, GtVariant};
use ulfsynth_core::segmetrics::{evaluate_scheme, write_reports_csv, Aggregation, Leaderboard, MetricsReport};
use ulfsynth_core::volgrid::{read_labels, LabelMap};

use crate::commands::remap::scheme;
use crate::{create_dir, CliError, EvaluateArgs, Outcome};

pub const LEADERBOARD_FILE: &str = "leaderboard.csv";

fn parse_submission(s: &str) -> Result<(String, String), CliError> {
    match s.split_once('=') {
        Some((name, pattern)) if !name.is_empty() && pattern.contains("{subject_id}") => {
            Ok((name.to_string(), pattern.to_string()))
        }
        _ => Err(CliError::Config(format!(
            "submission `{s}` must look like NAME=PATTERN with {{subject_id}} in PATTERN"
        ))),
    }
}

fn parse_variant(s: &str) -> Result<GtVariant, CliError> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| CliError::Config(format!("unknown ground-truth variant `{s}` (expected GT_HF or GT_LF)")))
}

pub fn run(args: EvaluateArgs) -> Result<Outcome, CliError> {
    let submissions = args.submissions.iter().map(|s| parse_submission(s)).collect::<Result<Vec<_>, _>>()?;
    let mut names: Vec<&str> = submissions.iter().map(|s| s.0.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Config("submission names must be unique".into()));
    }
    let aggregation: Aggregation = args.aggregation.parse()?;
    let scheme = scheme(&args.scheme, None)?;
    let variant = args.gt_variant.as_deref().map(parse_variant).transpose()?;
    let manifest = load_manifest(&args.manifest)?;
    let entries: Vec<_> = manifest
        .entries
        .iter()
        .filter(|e| variant.is_none_or(|v| e.gt_variant == v))
        .collect();
    if entries.is_empty() {
        return Err(CliError::Config("no manifest entries to evaluate".into()));
    }
    create_dir(&args.out)?;

    let gts: HashMap<&str, Result<LabelMap, String>> = entries
        .par_iter()
        .map(|e| (e.subject_id.as_str(), read_labels(manifest.resolve(&e.label_path)).map_err(|e| e.to_string())))
        .collect();

    let mut failed = 0;
    let mut all = Vec::new();
    for (name, pattern) in &submissions {
        let results: Vec<Result<MetricsReport, String>> = entries
            .par_iter()
            .map(|e| {
                let id = e.subject_id.as_str();
                let gt = gts[id].as_ref().map_err(|m| format!("{id}: ground truth: {m}"))?;
                let pred = read_labels(pattern.replace("{subject_id}", id)).map_err(|m| format!("{id}: {m}"))?;
                evaluate_scheme(id, &pred, gt, &scheme).map_err(|m| format!("{id}: {m}"))
            })
            .collect();
        let mut reports = Vec::new();
        for r in results {
            match r {
                Ok(rep) => reports.push(rep),
                Err(m) => {
                    tracing::error!(submission = %name, "{m}");
                    failed += 1;
                }
            }
        }
        let path = args.out.join(format!("{name}_report.csv"));
        let file = std::fs::File::create(&path).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        write_reports_csv(&reports, std::io::BufWriter::new(file))?;
        all.push((name.clone(), reports));
    }

    let board = Leaderboard::from_reports(&all, aggregation)?;
    let mut buf = Vec::new();
    board.write_csv(&mut buf)?;
    let path = args.out.join(LEADERBOARD_FILE);
    std::fs::write(&path, &buf).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    print!("{}", String::from_utf8_lossy(&buf));
    Ok(Outcome::from_failures(failed))
}
