use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::acquisition::{acquire, sample_acquisition, AcquisitionRecord};
use super::artifacts::{apply_artifact_records, sample_artifacts, ArtifactRecord};
use super::config::GeneratorConfig;
use super::filter::{gaussian_smooth, normalize_unit};
use super::intensity::{
    add_noise, apply_bias_record, apply_gamma, render_classes, sample_bias_record,
    sample_intensity_record, BiasRecord, IntensityRecord,
};
use super::seed::{stage_rng, stage_seed};
use super::spatial::{sample_spatial_record, SpatialRecord, SpatialTransform};
use crate::volgrid::{Interp, LabelMap, Volume};
use crate::{Error, Result};

/// Random streams, one per stage. `texture` and `noise_field` carry the
/// per-voxel draws; the others carry parameters only.
pub const STREAMS: [&str; 9] = [
    "spatial",
    "intensity",
    "texture",
    "bias",
    "gamma",
    "noise",
    "noise_field",
    "acquisition",
    "artifacts",
];

/// Everything sampled while generating one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// Stages in execution order; `acquisition` is absent when disabled.
    pub stage_order: Vec<String>,
    pub stream_seeds: Vec<(String, u64)>,
    pub spatial: SpatialRecord,
    pub intensity: IntensityRecord,
    pub bias: BiasRecord,
    pub gamma: f64,
    pub noise_std: f64,
    pub acquisition: Option<AcquisitionRecord>,
    pub artifacts: Vec<ArtifactRecord>,
}

impl Provenance {
    pub fn stream_seed(&self, stream: &str) -> Result<u64> {
        self.stream_seeds
            .iter()
            .find(|(s, _)| s == stream)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Validation(format!("provenance has no seed for stream `{stream}`")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("provenance serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub image: Volume,
    pub labels: LabelMap,
    pub seed: u64,
    pub provenance: Provenance,
}

/// Transform, intensities, bias, gamma, noise, optional resolution stage,
/// artifacts, final [0, 1] normalization. A pure function of its arguments.
pub fn generate(labels: &LabelMap, seed: u64, cfg: &GeneratorConfig) -> Result<SynthSample> {
    cfg.validate()?;
    let grid = labels.grid();
    let dims = grid.dims();

    let spatial = sample_spatial_record(&mut stage_rng(seed, "spatial"), &cfg.spatial);
    let warped = warp_labels(labels, &spatial)?;
    let intensity = sample_intensity_record(&warped, &mut stage_rng(seed, "intensity"), &cfg.intensity)?;
    let bias = sample_bias_record(&mut stage_rng(seed, "bias"), &cfg.bias);
    let gamma = cfg.gamma.sample(&mut stage_rng(seed, "gamma"));
    let noise_std = cfg.noise_std.sample(&mut stage_rng(seed, "noise"));
    let acquisition = if cfg.resolution.enabled {
        if !grid.is_isotropic() {
            return Err(Error::contract(format!(
                "resolution simulation needs an isotropic grid, spacing is {:?}",
                grid.spacing()
            )));
        }
        let (axis, thickness_mm) = sample_acquisition(&mut stage_rng(seed, "acquisition"), &cfg.resolution);
        let mut intermediate_dims = dims;
        intermediate_dims[axis] =
            super::acquisition::slice_count(dims[axis], grid.spacing()[axis], thickness_mm);
        Some(AcquisitionRecord {
            axis,
            thickness_mm,
            intermediate_dims,
        })
    } else {
        None
    };
    let artifacts = sample_artifacts(&mut stage_rng(seed, "artifacts"), &cfg.artifacts, dims);

    let mut stage_order = vec!["spatial", "intensity", "bias", "gamma", "noise"];
    if acquisition.is_some() {
        stage_order.push("acquisition");
    }
    stage_order.push("artifacts");
    let provenance = Provenance {
        seed,
        stage_order: stage_order.into_iter().map(String::from).collect(),
        stream_seeds: STREAMS.iter().map(|s| (s.to_string(), stage_seed(seed, s))).collect(),
        spatial,
        intensity,
        bias,
        gamma,
        noise_std,
        acquisition,
        artifacts,
    };
    let image = render(&warped, &provenance)?;
    Ok(SynthSample {
        image,
        labels: warped,
        seed,
        provenance,
    })
}

/// Rebuilds a sample from the original labels and its provenance alone.
pub fn replay(labels: &LabelMap, provenance: &Provenance) -> Result<SynthSample> {
    let warped = warp_labels(labels, &provenance.spatial)?;
    let image = render(&warped, provenance)?;
    Ok(SynthSample {
        image,
        labels: warped,
        seed: provenance.seed,
        provenance: provenance.clone(),
    })
}

fn warp_labels(labels: &LabelMap, spatial: &SpatialRecord) -> Result<LabelMap> {
    let transform = SpatialTransform::from_record(spatial, labels.grid())?;
    labels.warp(&transform.to_field(), Interp::Nearest)
}

/// Image stages applied to already-warped labels.
fn render(warped: &LabelMap, p: &Provenance) -> Result<Volume> {
    let mut texture = ChaCha8Rng::seed_from_u64(p.stream_seed("texture")?);
    let raw = render_classes(warped, &p.intensity, &mut texture);
    let mut image = normalize_unit(&gaussian_smooth(&raw, p.intensity.smoothing_sigma_mm));
    image = apply_bias_record(&image, &p.bias);
    image = apply_gamma(&image, p.gamma);
    let mut noise = ChaCha8Rng::seed_from_u64(p.stream_seed("noise_field")?);
    image = add_noise(&image, p.noise_std, &mut noise);
    if let Some(a) = &p.acquisition {
        image = acquire(&image, a.axis, a.thickness_mm)?.volume;
    }
    let image = normalize_unit(&apply_artifact_records(&image, &p.artifacts));
    debug_assert!(image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    Ok(image)
}
