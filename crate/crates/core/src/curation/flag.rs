use serde::{Deserialize, Serialize};

use crate::segmetrics::dice;
use crate::volgrid::LabelMap;
use crate::{Error, Result};

/// Right lateral ventricle and right caudate in the LISA scheme.
pub const DEFAULT_SENTINELS: [u32; 2] = [4, 6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flag {
    Suspect,
    Ok,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagResult {
    pub threshold: f64,
    /// Mean of the scores below / at-or-above the threshold.
    pub low_mean: Option<f64>,
    pub high_mean: Option<f64>,
    /// Every score identical: no split exists and nobody is flagged.
    pub degenerate: bool,
    pub subjects: Vec<(String, f64, Flag)>,
}

impl FlagResult {
    pub fn suspects(&self) -> impl Iterator<Item = &str> {
        self.subjects
            .iter()
            .filter(|s| s.2 == Flag::Suspect)
            .map(|s| s.0.as_str())
    }
}

fn sse(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - m).powi(2)).sum()
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Two-class split of the observed scores minimizing total within-class
/// squared deviation, searched over every gap between distinct values. The
/// threshold is the midpoint of the chosen gap; scores below it are suspect.
/// Returns the lowest-gap split on ties.
pub fn otsu_threshold(scores: &[f64]) -> Option<f64> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for i in 1..sorted.len() {
        if sorted[i] == sorted[i - 1] {
            continue;
        }
        let cost = sse(&sorted[..i]) + sse(&sorted[i..]);
        if best.is_none_or(|(c, _)| cost < c) {
            best = Some((cost, 0.5 * (sorted[i - 1] + sorted[i])));
        }
    }
    best.map(|(_, t)| t)
}

/// Advisory misregistration flags from per-subject sentinel scores.
pub fn flag_misregistration(scores: &[(String, f64)], manual_threshold: Option<f64>) -> Result<FlagResult> {
    if scores.len() < 2 {
        return Err(Error::Validation(format!(
            "misregistration flagging needs at least 2 subjects, got {}",
            scores.len()
        )));
    }
    if let Some((s, v)) = scores.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Validation(format!("score for `{s}` is not finite ({v})")));
    }
    let values: Vec<f64> = scores.iter().map(|s| s.1).collect();
    let auto = otsu_threshold(&values);
    let degenerate = auto.is_none() && manual_threshold.is_none();
    let threshold = match (manual_threshold, auto) {
        (Some(t), _) => t,
        (None, Some(t)) => t,
        (None, None) => values[0],
    };
    let flag = |v: f64| if !degenerate && v < threshold { Flag::Suspect } else { Flag::Ok };
    Ok(FlagResult {
        threshold,
        low_mean: mean(values.iter().copied().filter(|&v| v < threshold)),
        high_mean: mean(values.iter().copied().filter(|&v| v >= threshold)),
        degenerate,
        subjects: scores.iter().map(|(s, v)| (s.clone(), *v, flag(*v))).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentinelScore {
    pub subject_id: String,
    /// Mean DSC over the sentinels present in the ground truth.
    pub score: Option<f64>,
    pub used: Vec<u32>,
    /// Sentinels absent from the ground truth, excluded from the mean.
    pub missing: Vec<u32>,
}

pub fn sentinel_score(subject_id: &str, pred: &LabelMap, gt: &LabelMap, sentinels: &[u32]) -> Result<SentinelScore> {
    let mut used = Vec::new();
    let mut missing = Vec::new();
    let mut total = 0.0;
    for &label in sentinels {
        if gt.data().contains(&label) {
            total += dice(pred, gt, label)?;
            used.push(label);
        } else {
            missing.push(label);
        }
    }
    Ok(SentinelScore {
        subject_id: subject_id.to_string(),
        score: (!used.is_empty()).then(|| total / used.len() as f64),
        used,
        missing,
    })
}

/// [`sentinel_score`] for each `(subject_id, prediction, ground truth)`.
pub fn sentinel_scores(cases: &[(String, LabelMap, LabelMap)], sentinels: &[u32]) -> Result<Vec<SentinelScore>> {
    cases
        .iter()
        .map(|(s, p, g)| sentinel_score(s, p, g, sentinels))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volgrid::Grid;
    use proptest::prelude::*;

    fn named(values: &[f64]) -> Vec<(String, f64)> {
        values.iter().enumerate().map(|(i, v)| (format!("s{i:02}"), *v)).collect()
    }

    /// Every threshold between consecutive sorted values, brute-forced.
    fn split_oracle(values: &[f64]) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let mut best = (f64::INFINITY, 0.0);
        for i in 1..v.len() {
            if v[i] == v[i - 1] {
                continue;
            }
            let t = 0.5 * (v[i - 1] + v[i]);
            let lo: Vec<f64> = values.iter().copied().filter(|&x| x < t).collect();
            let hi: Vec<f64> = values.iter().copied().filter(|&x| x >= t).collect();
            let var = |s: &[f64]| {
                let m = s.iter().sum::<f64>() / s.len() as f64;
                s.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
            };
            let c = var(&lo) + var(&hi);
            if c < best.0 {
                best = (c, t);
            }
        }
        best.1
    }

    #[test]
    fn ten_point_bimodal() {
        let mut v = vec![0.9; 5];
        v.extend([0.5; 5]);
        let r = flag_misregistration(&named(&v), None).unwrap();
        assert!(r.threshold > 0.5 && r.threshold < 0.9);
        assert_eq!(r.threshold, split_oracle(&v));
        assert_eq!(r.suspects().count(), 5);
        assert!(!r.degenerate);
        assert_eq!((r.low_mean, r.high_mean), (Some(0.5), Some(0.9)));
    }

    #[test]
    fn identical_scores_are_degenerate() {
        let r = flag_misregistration(&named(&[0.8; 6]), None).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.suspects().count(), 0);
    }

    #[test]
    fn manual_threshold_overrides() {
        let r = flag_misregistration(&named(&[0.53, 0.57, 0.85, 0.9, 0.88]), Some(0.7)).unwrap();
        assert_eq!(r.threshold, 0.7);
        assert_eq!(r.suspects().collect::<Vec<_>>(), ["s00", "s01"]);
    }

    #[test]
    fn input_errors() {
        assert!(flag_misregistration(&named(&[0.5]), None).is_err());
        assert!(flag_misregistration(&named(&[0.5, f64::NAN]), None).is_err());
    }

    #[test]
    fn sentinel_examples() {
        let g = Grid::with_spacing([8, 8, 8], [1.0; 3]).unwrap();
        // gt: label 4 in x<4, label 6 in x>=4 for z<4. pred: label 4 shifted by one slab.
        let gt: Vec<u32> = (0..512)
            .map(|i| {
                let [x, _, z] = g.coords(i);
                if z >= 4 { 0 } else if x < 4 { 4 } else { 6 }
            })
            .collect();
        let pred: Vec<u32> = (0..512)
            .map(|i| {
                let [x, _, z] = g.coords(i);
                if z >= 4 { 0 } else if x < 3 { 4 } else { 6 }
            })
            .collect();
        let gt = LabelMap::from_data(g.clone(), gt).unwrap();
        let pred = LabelMap::from_data(g.clone(), pred).unwrap();
        let same = sentinel_score("s", &gt, &gt, &DEFAULT_SENTINELS).unwrap();
        assert_eq!(same.score, Some(1.0));
        // Label 4: |P|=96, |G|=128, overlap 96 -> 192/224. Label 6: |P|=160, |G|=128, overlap 128 -> 256/288.
        let s = sentinel_score("s", &pred, &gt, &DEFAULT_SENTINELS).unwrap();
        let expected = (192.0 / 224.0 + 256.0 / 288.0) / 2.0;
        assert!((s.score.unwrap() - expected).abs() < 1e-15);
        let s = sentinel_score("s", &pred, &gt, &[4, 9]).unwrap();
        assert_eq!(s.missing, vec![9]);
        assert!((s.score.unwrap() - 192.0 / 224.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn threshold_matches_oracle(v in prop::collection::vec(0.0f64..1.0, 2..40)) {
            let r = flag_misregistration(&named(&v), None).unwrap();
            if !r.degenerate {
                prop_assert_eq!(r.threshold, split_oracle(&v));
            }
        }

        #[test]
        fn bimodal_split_is_stable(
            lo in prop::collection::vec(0.40f64..0.60, 3..30),
            hi in prop::collection::vec(0.85f64..0.95, 3..30),
            extra in 0usize..10,
        ) {
            let mut v: Vec<f64> = lo.iter().chain(&hi).copied().collect();
            let t = flag_misregistration(&named(&v), None).unwrap().threshold;
            prop_assert!(t > 0.6 && t < 0.85);
            let suspects = |vals: &[f64]| flag_misregistration(&named(vals), None).unwrap().suspects().count();
            let n_lo = suspects(&v);
            prop_assert_eq!(n_lo, lo.len());
            // Adding copies of the class means keeps the split in the same gap.
            let (m_lo, m_hi) = (lo.iter().sum::<f64>() / lo.len() as f64, hi.iter().sum::<f64>() / hi.len() as f64);
            v.extend(std::iter::repeat_n(m_lo, extra));
            v.extend(std::iter::repeat_n(m_hi, extra));
            prop_assert_eq!(suspects(&v), lo.len() + extra);
        }
    }
}
