use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::{BiasConfig, IntensityConfig};
use super::filter::{gaussian_smooth, normalize_unit, upsample_control};
use crate::volgrid::{LabelMap, Volume};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassIntensity {
    pub label: u32,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityRecord {
    /// One entry per class present (background first), ascending label order.
    pub classes: Vec<ClassIntensity>,
    pub smoothing_sigma_mm: f64,
}

/// Draws `(mean, std)` for every class in `labels`, in ascending label order,
/// then the smoothing sigma.
pub fn sample_intensity_record(
    labels: &LabelMap,
    rng: &mut impl Rng,
    cfg: &IntensityConfig,
) -> Result<IntensityRecord> {
    let mut present = Vec::with_capacity(16);
    if labels.data().contains(&0) {
        present.push(0);
    }
    present.extend(labels.present_labels());
    let classes = present
        .into_iter()
        .map(|label| {
            let prior = cfg.prior_for(label)?;
            Ok(ClassIntensity {
                label,
                mean: prior.mean.sample(rng),
                std: prior.std.sample(rng),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IntensityRecord {
        classes,
        smoothing_sigma_mm: cfg.smoothing_sigma_mm.sample(rng),
    })
}

/// Piecewise Gaussian rendering before smoothing and normalization. Voxels are
/// visited in storage order, one standard-normal draw each.
pub fn render_classes(labels: &LabelMap, rec: &IntensityRecord, rng: &mut impl Rng) -> Volume {
    let lookup = |label: u32| {
        rec.classes
            .binary_search_by_key(&label, |c| c.label)
            .map(|i| rec.classes[i])
            .expect("every present label has a sampled intensity")
    };
    let data = labels
        .data()
        .iter()
        .map(|&l| {
            let c = lookup(l);
            let z: f64 = StandardNormal.sample(rng);
            c.mean + c.std * z
        })
        .collect();
    Volume::new(labels.grid().clone(), data).expect("finite intensities")
}

/// Random per-class Gaussian intensities, smoothed and min-max normalized.
pub fn synth_intensity(
    labels: &LabelMap,
    rng: &mut impl Rng,
    cfg: &IntensityConfig,
) -> Result<(Volume, IntensityRecord)> {
    let rec = sample_intensity_record(labels, rng, cfg)?;
    let raw = render_classes(labels, &rec, rng);
    let smooth = gaussian_smooth(&raw, rec.smoothing_sigma_mm);
    Ok((normalize_unit(&smooth), rec))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRecord {
    pub log_std: f64,
    pub control_dims: [usize; 3],
    /// Log-amplitude at each control point, axis 0 fastest.
    pub control_values: Vec<f64>,
}

pub fn sample_bias_record(rng: &mut impl Rng, cfg: &BiasConfig) -> BiasRecord {
    let log_std = cfg.log_std.sample(rng);
    let n: usize = cfg.grid.iter().product();
    let control_values = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            log_std * z
        })
        .collect();
    BiasRecord {
        log_std,
        control_dims: cfg.grid,
        control_values,
    }
}

/// Dense multiplicative field `exp(B)` on `vol`'s grid.
pub fn bias_multiplier(rec: &BiasRecord, dims: [usize; 3]) -> Vec<f64> {
    upsample_control(&rec.control_values, rec.control_dims, dims)
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// Multiplies by the bias field and divides by the new maximum, so values
/// stay in [0, 1] and positive voxels stay positive.
pub fn apply_bias_record(vol: &Volume, rec: &BiasRecord) -> Volume {
    let mult = bias_multiplier(rec, vol.grid().dims());
    let data: Vec<f64> = vol.data().iter().zip(&mult).map(|(v, m)| v * m).collect();
    let max = data.iter().copied().fold(0.0f64, f64::max);
    let data = if max > 0.0 {
        data.into_iter().map(|v| v / max).collect()
    } else {
        data
    };
    vol.with_data(data).expect("finite bias")
}

pub fn apply_bias_field(vol: &Volume, rng: &mut impl Rng, cfg: &BiasConfig) -> (Volume, BiasRecord) {
    let rec = sample_bias_record(rng, cfg);
    (apply_bias_record(vol, &rec), rec)
}

/// `v -> v^gamma` on values already in [0, 1].
pub fn apply_gamma(vol: &Volume, gamma: f64) -> Volume {
    vol.map(|v| v.max(0.0).powf(gamma))
}

/// Additive i.i.d. Gaussian noise followed by min-max normalization.
pub fn add_noise(vol: &Volume, std: f64, rng: &mut impl Rng) -> Volume {
    if !(std > 0.0) {
        return vol.clone();
    }
    let normal = Normal::new(0.0, std).expect("positive std");
    let data = vol.data().iter().map(|v| v + normal.sample(rng)).collect();
    normalize_unit(&vol.with_data(data).expect("finite noise"))
}
