//! Domain-randomized synthetic image generation from label maps.
//!
//! Stage parameters are drawn from independent seeded streams and recorded
//! in a [`Provenance`], which is enough to rebuild the image.

mod acquisition;
mod artifacts;
mod config;
mod filter;
mod intensity;
mod kspace;
mod pipeline;
mod seed;
mod spatial;

pub use acquisition::{acquire, simulate_acquisition, slice_count, Acquisition, AcquisitionRecord, FWHM_PER_SIGMA};
pub use artifacts::{
    apply_artifact_records, apply_artifacts, apply_ghosting, apply_motion, apply_spike,
    ghost_plane_modified, sample_artifacts, sample_ghosting, sample_motion, sample_spike,
    ArtifactRecord, GhostingParams, MotionParams, RigidMotion, SpikeParams,
};
pub use config::{
    ArtifactConfig, AxisRanges, BiasConfig, ClassPrior, CountRange, GeneratorConfig,
    GhostingConfig, IntensityConfig, MotionConfig, Range, ResolutionConfig, SeedPolicy,
    SpatialConfig, SpikeConfig, GENERATOR_SCHEMA_VERSION,
};
pub use filter::{gaussian_smooth, normalize_unit};
pub use intensity::{
    add_noise, apply_bias_field, apply_bias_record, apply_gamma, bias_multiplier,
    render_classes, sample_bias_record, sample_intensity_record, synth_intensity, BiasRecord,
    ClassIntensity, IntensityRecord,
};
pub use pipeline::{generate, replay, Provenance, SynthSample, STREAMS};
pub use seed::{sample_seed, stage_rng, stage_seed};
pub use spatial::{sample_spatial_record, sample_transform, SpatialRecord, SpatialTransform};
