use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::report::{csv_err, Metric, MetricsReport};
use crate::{Error, Result};

/// How per-subject, per-label values become leaderboard columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// One column per metric: mean over all subjects and labels.
    #[default]
    Pooled,
    /// One column per (label, metric): mean over subjects.
    PerLabel,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Pooled => "pooled",
            Aggregation::PerLabel => "per-label",
        }
    }
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(Aggregation::Pooled),
            "per-label" | "per_label" => Ok(Aggregation::PerLabel),
            other => Err(Error::Validation(format!("unknown aggregation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnKey {
    pub metric: Metric,
    pub label: Option<u32>,
}

impl ColumnKey {
    pub fn name(&self) -> String {
        match self.label {
            None => self.metric.as_str().to_string(),
            Some(l) => format!("{}_{l}", self.metric),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub submission: String,
    /// Column means; `None` when every value in the column was missing.
    pub values: Vec<Option<f64>>,
    /// Values averaged per column.
    pub counts: Vec<usize>,
    /// Missing entries excluded per column.
    pub missing: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub aggregation: Aggregation,
    pub columns: Vec<ColumnKey>,
    pub rows: Vec<LeaderboardRow>,
}

/// Normalized average over a complete `submissions x [DSC, HD, HD95, ASSD, RVE]`
/// matrix. Lower is better.
pub fn norm_avg(matrix: &[[f64; 5]]) -> Result<Vec<f64>> {
    let rows: Vec<Vec<Option<f64>>> = matrix.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect();
    let reverse = Metric::ALL.map(Metric::higher_is_better);
    Ok(norm_avg_columns(&rows, &reverse)?
        .into_iter()
        .map(|s| s.expect("complete matrix yields a score per row"))
        .collect())
}

/// General form: `reverse[c]` columns are mapped `x -> 1 - x` first; every
/// column is min-max normalized over the rows that have it (a constant
/// column maps to 0); each score is the mean over the row's present columns.
pub fn norm_avg_columns(rows: &[Vec<Option<f64>>], reverse: &[bool]) -> Result<Vec<Option<f64>>> {
    if rows.is_empty() {
        return Err(Error::contract("norm_avg needs at least one submission"));
    }
    let ncol = reverse.len();
    if rows.iter().any(|r| r.len() != ncol) {
        return Err(Error::contract("leaderboard rows and columns disagree"));
    }
    let oriented = |v: f64, c: usize| if reverse[c] { 1.0 - v } else { v };
    let bounds: Vec<Option<(f64, f64)>> = (0..ncol)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r[c].map(|v| oriented(v, c)))
                .fold(None, |acc, v| match acc {
                    None => Some((v, v)),
                    Some((lo, hi)) => Some((f64::min(lo, v), f64::max(hi, v))),
                })
        })
        .collect();
    Ok(rows
        .iter()
        .map(|r| {
            let normalized: Vec<f64> = (0..ncol)
                .filter_map(|c| {
                    let v = oriented(r[c]?, c);
                    let (lo, hi) = bounds[c]?;
                    Some(if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
                })
                .collect();
            (!normalized.is_empty()).then(|| normalized.iter().sum::<f64>() / normalized.len() as f64)
        })
        .collect())
}

impl Leaderboard {
    pub fn from_reports(submissions: &[(String, Vec<MetricsReport>)], aggregation: Aggregation) -> Result<Self> {
        if submissions.is_empty() {
            return Err(Error::contract("leaderboard needs at least one submission"));
        }
        let columns: Vec<ColumnKey> = match aggregation {
            Aggregation::Pooled => Metric::ALL.map(|metric| ColumnKey { metric, label: None }).to_vec(),
            Aggregation::PerLabel => {
                let labels: BTreeSet<u32> = submissions
                    .iter()
                    .flat_map(|(_, rs)| rs.iter().flat_map(|r| r.labels.iter().copied()))
                    .collect();
                labels
                    .into_iter()
                    .flat_map(|l| Metric::ALL.map(|metric| ColumnKey { metric, label: Some(l) }))
                    .collect()
            }
        };
        let rows = submissions
            .iter()
            .map(|(name, reports)| {
                let mut sums = vec![0.0; columns.len()];
                let mut counts = vec![0usize; columns.len()];
                let mut missing = vec![0usize; columns.len()];
                for e in reports.iter().flat_map(|r| &r.entries) {
                    let Some(c) = columns.iter().position(|k| {
                        k.metric == e.metric && k.label.is_none_or(|l| l == e.label)
                    }) else {
                        continue;
                    };
                    match e.value.value() {
                        Some(v) => {
                            sums[c] += v;
                            counts[c] += 1;
                        }
                        None => missing[c] += 1,
                    }
                }
                let values = sums
                    .iter()
                    .zip(&counts)
                    .map(|(s, &n)| (n > 0).then(|| s / n as f64))
                    .collect();
                LeaderboardRow {
                    submission: name.clone(),
                    values,
                    counts,
                    missing,
                }
            })
            .collect();
        Ok(Self {
            aggregation,
            columns,
            rows,
        })
    }

    pub fn scores(&self) -> Result<Vec<Option<f64>>> {
        let rows: Vec<Vec<Option<f64>>> = self.rows.iter().map(|r| r.values.clone()).collect();
        let reverse: Vec<bool> = self.columns.iter().map(|c| c.metric.higher_is_better()).collect();
        norm_avg_columns(&rows, &reverse)
    }

    /// Competition ranks (1, 2, 2, 4, ...) by ascending score; rows without a
    /// score rank last.
    pub fn ranks(&self) -> Result<Vec<Option<usize>>> {
        let scores = self.scores()?;
        Ok(scores
            .iter()
            .map(|s| s.map(|v| 1 + scores.iter().flatten().filter(|&&o| o < v).count()))
            .collect())
    }

    /// Columns: submission, one per aggregate, `n_*` and `missing_*` counts,
    /// norm_avg, rank, aggregation.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let scores = self.scores()?;
        let ranks = self.ranks()?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["submission".to_string()];
        header.extend(self.columns.iter().map(ColumnKey::name));
        header.extend(self.columns.iter().map(|c| format!("n_{}", c.name())));
        header.extend(self.columns.iter().map(|c| format!("missing_{}", c.name())));
        header.extend(["norm_avg", "rank", "aggregation"].map(String::from));
        w.write_record(&header).map_err(csv_err)?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for ((row, score), rank) in self.rows.iter().zip(&scores).zip(&ranks) {
            let mut rec = vec![row.submission.clone()];
            rec.extend(row.values.iter().map(|v| fmt(*v)));
            rec.extend(row.counts.iter().map(usize::to_string));
            rec.extend(row.missing.iter().map(usize::to_string));
            rec.push(fmt(*score));
            rec.push(rank.map(|r| r.to_string()).unwrap_or_default());
            rec.push(self.aggregation.as_str().to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}
