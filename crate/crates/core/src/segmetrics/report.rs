use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::distance::{assd, hausdorff, hd95, surface_distances};
use super::overlap::{check_grids, dice, rve};
use crate::labelharm::LabelScheme;
use crate::volgrid::LabelMap;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "DSC")]
    Dsc,
    #[serde(rename = "HD")]
    Hd,
    #[serde(rename = "HD95")]
    Hd95,
    #[serde(rename = "ASSD")]
    Assd,
    #[serde(rename = "RVE")]
    Rve,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Dsc, Metric::Hd, Metric::Hd95, Metric::Assd, Metric::Rve];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Dsc => "DSC",
            Metric::Hd => "HD",
            Metric::Hd95 => "HD95",
            Metric::Assd => "ASSD",
            Metric::Rve => "RVE",
        }
    }

    /// Higher is better only for DSC.
    pub fn higher_is_better(self) -> bool {
        self == Metric::Dsc
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Validation(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingReason {
    GtEmpty,
    PredEmpty,
    BothEmpty,
}

impl MissingReason {
    pub fn as_str(self) -> &'static str {
        match self {
            MissingReason::GtEmpty => "gt-empty",
            MissingReason::PredEmpty => "pred-empty",
            MissingReason::BothEmpty => "both-empty",
        }
    }
}

impl FromStr for MissingReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gt-empty" => Ok(MissingReason::GtEmpty),
            "pred-empty" => Ok(MissingReason::PredEmpty),
            "both-empty" => Ok(MissingReason::BothEmpty),
            other => Err(Error::Validation(format!("unknown status `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricValue {
    Value(f64),
    Missing(MissingReason),
}

impl MetricValue {
    pub fn value(self) -> Option<f64> {
        match self {
            MetricValue::Value(v) => Some(v),
            MetricValue::Missing(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub label: u32,
    pub metric: Metric,
    pub value: MetricValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub subject_id: String,
    pub labels: Vec<u32>,
    pub entries: Vec<MetricEntry>,
}

impl MetricsReport {
    pub fn get(&self, label: u32, metric: Metric) -> Option<MetricValue> {
        self.entries
            .iter()
            .find(|e| e.label == label && e.metric == metric)
            .map(|e| e.value)
    }

    /// Rows `subject_id,label,metric,value,status`; missing values leave
    /// `value` empty and put the reason in `status`.
    pub fn write_csv_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        for e in &self.entries {
            let (value, status) = match e.value {
                MetricValue::Value(v) => (format!("{v}"), "ok"),
                MetricValue::Missing(r) => (String::new(), r.as_str()),
            };
            w.write_record([
                self.subject_id.as_str(),
                &e.label.to_string(),
                e.metric.as_str(),
                &value,
                status,
            ])
            .map_err(csv_err)?;
        }
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        location: e
            .position()
            .map(|p| format!("row {}", p.line()))
            .unwrap_or_else(|| "csv".into()),
        message: e.to_string(),
    }
}

pub const REPORT_CSV_HEADER: [&str; 5] = ["subject_id", "label", "metric", "value", "status"];

/// Writes several reports to one CSV with a header row.
pub fn write_reports_csv<W: Write>(reports: &[MetricsReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_CSV_HEADER).map_err(csv_err)?;
    for r in reports {
        r.write_csv_rows(&mut w)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// Per-label metrics for `labels`.
///
/// A label absent from the ground truth is reported missing for every metric
/// (`gt-empty`, or `both-empty` when the prediction lacks it too). A label
/// absent only from the prediction scores DSC 0 and RVE 1 with the distance
/// metrics missing (`pred-empty`).
pub fn evaluate(subject_id: &str, pred: &LabelMap, gt: &LabelMap, labels: &[u32]) -> Result<MetricsReport> {
    check_grids(pred, gt)?;
    let mut entries = Vec::with_capacity(labels.len() * Metric::ALL.len());
    for &label in labels {
        let in_gt = gt.data().contains(&label);
        let in_pred = pred.data().contains(&label);
        let values: [MetricValue; 5] = match (in_pred, in_gt) {
            (false, false) => [MetricValue::Missing(MissingReason::BothEmpty); 5],
            (true, false) => [MetricValue::Missing(MissingReason::GtEmpty); 5],
            (false, true) => {
                let m = MetricValue::Missing(MissingReason::PredEmpty);
                [MetricValue::Value(0.0), m, m, m, MetricValue::Value(1.0)]
            }
            (true, true) => {
                let sd = surface_distances(pred, gt, label)?;
                [
                    MetricValue::Value(dice(pred, gt, label)?),
                    MetricValue::Value(hausdorff(&sd)?),
                    MetricValue::Value(hd95(&sd)?),
                    MetricValue::Value(assd(&sd)?),
                    MetricValue::Value(rve(pred, gt, label)?),
                ]
            }
        };
        entries.extend(
            Metric::ALL
                .into_iter()
                .zip(values)
                .map(|(metric, value)| MetricEntry { label, metric, value }),
        );
    }
    Ok(MetricsReport {
        subject_id: subject_id.to_string(),
        labels: labels.to_vec(),
        entries,
    })
}

/// [`evaluate`] over the scheme's evaluated classes.
pub fn evaluate_scheme(subject_id: &str, pred: &LabelMap, gt: &LabelMap, scheme: &LabelScheme) -> Result<MetricsReport> {
    evaluate(subject_id, pred, gt, &scheme.evaluated_labels())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labelharm::builtin_schemes;
    use crate::volgrid::Grid;

    fn lisa_like() -> LabelMap {
        let g = Grid::with_spacing([16, 8, 8], [1.0; 3]).unwrap();
        let data = (0..g.len())
            .map(|idx| {
                let [i, j, _] = g.coords(idx);
                if j < 2 { 0 } else { (i / 2) as u32 + 1 }
            })
            .collect();
        LabelMap::from_data(g, data).unwrap()
    }

    #[test]
    fn perfect_prediction_skips_ventricles() {
        let m = lisa_like();
        let lisa = builtin_schemes().lisa;
        let r = evaluate_scheme("s", &m, &m, &lisa).unwrap();
        assert_eq!(r.labels, vec![1, 2, 5, 6, 7, 8]);
        assert!(r.entries.iter().all(|e| e.label != 3 && e.label != 4));
        for e in &r.entries {
            let perfect = if e.metric == Metric::Dsc { 1.0 } else { 0.0 };
            assert_eq!(e.value, MetricValue::Value(perfect));
        }
    }

    #[test]
    fn empty_structures_are_marked() {
        let gt = lisa_like();
        let pred_data: Vec<u32> = gt.data().iter().map(|&v| if v == 2 { 0 } else { v }).collect();
        let pred = LabelMap::from_data(gt.grid().clone(), pred_data).unwrap();
        let r = evaluate("s", &pred, &gt, &[2, 9]).unwrap();
        assert_eq!(r.get(2, Metric::Dsc), Some(MetricValue::Value(0.0)));
        assert_eq!(r.get(2, Metric::Rve), Some(MetricValue::Value(1.0)));
        assert_eq!(r.get(2, Metric::Hd), Some(MetricValue::Missing(MissingReason::PredEmpty)));
        assert_eq!(r.get(9, Metric::Dsc), Some(MetricValue::Missing(MissingReason::BothEmpty)));
        let r = evaluate("s", &gt, &pred, &[2]).unwrap();
        assert!(r.entries.iter().all(|e| e.value == MetricValue::Missing(MissingReason::GtEmpty)));
    }

    #[test]
    fn csv_rows() {
        let gt = lisa_like();
        let r = evaluate("sub-1", &gt, &gt, &[1, 9]).unwrap();
        let mut buf = Vec::new();
        write_reports_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "subject_id,label,metric,value,status");
        assert_eq!(lines[1], "sub-1,1,DSC,1,ok");
        assert_eq!(lines[6], "sub-1,9,DSC,,both-empty");
        assert_eq!(lines.len(), 11);
    }

    #[test]
    fn metric_names_parse() {
        for m in Metric::ALL {
            assert_eq!(m.as_str().parse::<Metric>().unwrap(), m);
        }
        assert!("dice".parse::<Metric>().is_err());
    }
}
