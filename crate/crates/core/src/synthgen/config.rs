use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const GENERATOR_SCHEMA_VERSION: u32 = 1;

/// Closed interval `[lo, hi]`. Deserializes from `[lo, hi]` or from a single
/// number `t`, read as `[-t, t]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RangeRepr", into = "[f64; 2]")]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RangeRepr {
    Pair([f64; 2]),
    Symmetric(f64),
}

impl TryFrom<RangeRepr> for Range {
    type Error = String;

    fn try_from(r: RangeRepr) -> std::result::Result<Self, String> {
        let (lo, hi) = match r {
            RangeRepr::Pair([lo, hi]) => (lo, hi),
            RangeRepr::Symmetric(t) => (-t.abs(), t.abs()),
        };
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(format!("invalid range [{lo}, {hi}]"));
        }
        Ok(Range { lo, hi })
    }
}

impl From<Range> for [f64; 2] {
    fn from(r: Range) -> Self {
        [r.lo, r.hi]
    }
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn fixed(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub const fn symmetric(t: f64) -> Self {
        Self { lo: -t, hi: t }
    }

    /// Uniform draw; always consumes one value from `rng`, even for a point range.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.random();
        self.lo + (self.hi - self.lo) * u
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    fn check(&self, what: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo > self.hi {
            return Err(Error::Config(format!("{what}: invalid range [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }
}

/// Inclusive integer range, written `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct CountRange {
    pub lo: u32,
    pub hi: u32,
}

impl From<[u32; 2]> for CountRange {
    fn from([lo, hi]: [u32; 2]) -> Self {
        Self { lo, hi }
    }
}

impl From<CountRange> for [u32; 2] {
    fn from(r: CountRange) -> Self {
        [r.lo, r.hi]
    }
}

impl CountRange {
    pub const fn new(lo: u32, hi: u32) -> Self {
        Self { lo, hi }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> u32 {
        rng.random_range(self.lo..=self.hi)
    }
}

/// One range per axis. Accepts a scalar `t` (`[-t, t]` on every axis), a
/// single `[lo, hi]` pair shared by all axes, or three pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AxisRangesRepr", into = "[[f64; 2]; 3]")]
pub struct AxisRanges(pub [Range; 3]);

#[derive(Deserialize)]
#[serde(untagged)]
enum AxisRangesRepr {
    PerAxis([[f64; 2]; 3]),
    Shared([f64; 2]),
    Symmetric(f64),
}

impl TryFrom<AxisRangesRepr> for AxisRanges {
    type Error = String;

    fn try_from(r: AxisRangesRepr) -> std::result::Result<Self, String> {
        let ranges = match r {
            AxisRangesRepr::PerAxis(p) => p.map(RangeRepr::Pair),
            AxisRangesRepr::Shared(p) => [RangeRepr::Pair(p), RangeRepr::Pair(p), RangeRepr::Pair(p)],
            AxisRangesRepr::Symmetric(t) => [
                RangeRepr::Symmetric(t),
                RangeRepr::Symmetric(t),
                RangeRepr::Symmetric(t),
            ],
        };
        let [a, b, c] = ranges;
        Ok(AxisRanges([a.try_into()?, b.try_into()?, c.try_into()?]))
    }
}

impl From<AxisRanges> for [[f64; 2]; 3] {
    fn from(r: AxisRanges) -> Self {
        r.0.map(Into::into)
    }
}

impl AxisRanges {
    pub const fn uniform(r: Range) -> Self {
        Self([r, r, r])
    }

    pub fn sample(&self, rng: &mut impl Rng) -> [f64; 3] {
        [self.0[0].sample(rng), self.0[1].sample(rng), self.0[2].sample(rng)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassPrior {
    pub mean: Range,
    pub std: Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensityConfig {
    /// Prior for any foreground class without its own entry. `None` makes a
    /// missing class a configuration error.
    pub default: Option<ClassPrior>,
    pub background: Option<ClassPrior>,
    /// Per-label overrides keyed by label id.
    #[serde(default)]
    pub classes: BTreeMap<String, ClassPrior>,
    /// Gaussian smoothing sigma applied after intensity sampling.
    pub smoothing_sigma_mm: Range,
}

impl IntensityConfig {
    pub fn prior_for(&self, label: u32) -> Result<ClassPrior> {
        if let Some(p) = self.classes.get(&label.to_string()) {
            return Ok(*p);
        }
        let fallback = if label == 0 {
            self.background.or(self.default)
        } else {
            self.default
        };
        fallback.ok_or_else(|| {
            Error::Config(format!("label {label} is present but has no intensity prior"))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialConfig {
    pub rotation_deg: AxisRanges,
    pub scale: AxisRanges,
    /// Forward displacement of image content, in mm.
    pub translation_mm: AxisRanges,
    /// Shear components (xy, xz, yz).
    pub shear: AxisRanges,
    pub nonrigid_grid: [usize; 3],
    pub nonrigid_max_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasConfig {
    pub grid: [usize; 3],
    /// Range of the standard deviation of the log-amplitude control values.
    pub log_std: Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionConfig {
    pub enabled: bool,
    pub thickness_mm: Range,
    /// Candidate slice axes.
    pub axes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GhostingConfig {
    pub probability: f64,
    pub num_ghosts: CountRange,
    pub intensity: Range,
    pub axes: Vec<usize>,
    /// Fraction of k-space extent around DC left untouched.
    pub restore: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikeConfig {
    pub probability: f64,
    pub num_spikes: CountRange,
    pub intensity: Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionConfig {
    pub probability: f64,
    pub num_movements: CountRange,
    /// Maximum absolute rotation per axis.
    pub rotation_deg: f64,
    /// Maximum absolute translation per axis.
    pub translation_mm: f64,
    /// Candidate phase-encode axes.
    pub axes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactConfig {
    pub ghosting: GhostingConfig,
    pub spike: SpikeConfig,
    pub motion: MotionConfig,
}

/// Per-sample seeds are `sample_seed(dataset_seed, subject_id, epoch, index)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedPolicy {
    pub dataset_seed: u64,
}

/// Every randomization range used by [`super::generate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub schema_version: u32,
    pub intensity: IntensityConfig,
    pub spatial: SpatialConfig,
    pub bias: BiasConfig,
    /// Exponent range for `v -> v^gamma`.
    pub gamma: Range,
    pub noise_std: Range,
    pub resolution: ResolutionConfig,
    pub artifacts: ArtifactConfig,
    pub seed: SeedPolicy,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            schema_version: GENERATOR_SCHEMA_VERSION,
            intensity: IntensityConfig {
                default: Some(ClassPrior {
                    mean: Range::new(0.1, 0.9),
                    std: Range::new(0.01, 0.1),
                }),
                background: Some(ClassPrior {
                    mean: Range::new(0.0, 0.3),
                    std: Range::new(0.01, 0.1),
                }),
                classes: BTreeMap::new(),
                smoothing_sigma_mm: Range::new(0.0, 1.0),
            },
            spatial: SpatialConfig {
                rotation_deg: AxisRanges::uniform(Range::symmetric(15.0)),
                scale: AxisRanges::uniform(Range::new(0.85, 1.15)),
                translation_mm: AxisRanges::uniform(Range::symmetric(5.0)),
                shear: AxisRanges::uniform(Range::symmetric(0.012)),
                nonrigid_grid: [5, 5, 5],
                nonrigid_max_mm: 3.0,
            },
            bias: BiasConfig {
                grid: [4, 4, 4],
                log_std: Range::new(0.0, 0.5),
            },
            gamma: Range::new(0.75, 1.33),
            noise_std: Range::new(0.0, 0.05),
            resolution: ResolutionConfig {
                enabled: true,
                thickness_mm: Range::new(1.0, 5.0),
                axes: vec![0, 1, 2],
            },
            artifacts: ArtifactConfig {
                ghosting: GhostingConfig {
                    probability: 0.3,
                    num_ghosts: CountRange::new(2, 5),
                    intensity: Range::new(0.2, 1.0),
                    axes: vec![0, 1, 2],
                    restore: 0.06,
                },
                spike: SpikeConfig {
                    probability: 0.3,
                    num_spikes: CountRange::new(1, 3),
                    intensity: Range::new(0.05, 0.3),
                },
                motion: MotionConfig {
                    probability: 0.3,
                    num_movements: CountRange::new(1, 3),
                    rotation_deg: 10.0,
                    translation_mm: 10.0,
                    axes: vec![0, 1, 2],
                },
            },
            seed: SeedPolicy { dataset_seed: 0 },
        }
    }
}

fn check_probability(p: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{what}: probability {p} is outside [0, 1]")))
    }
}

fn check_axes(axes: &[usize], what: &str) -> Result<()> {
    if axes.is_empty() || axes.iter().any(|&a| a > 2) {
        return Err(Error::Config(format!("{what}: axes must be a non-empty subset of {{0, 1, 2}}")));
    }
    Ok(())
}

fn check_counts(r: CountRange, what: &str) -> Result<()> {
    if r.lo > r.hi {
        return Err(Error::Config(format!("{what}: invalid count range [{}, {}]", r.lo, r.hi)));
    }
    Ok(())
}

impl GeneratorConfig {
    /// Disables every randomization: identity transform, degenerate priors,
    /// no bias, gamma 1, no noise, no resolution stage, no artifacts.
    pub fn deterministic(mean: f64) -> Self {
        let mut cfg = Self::default();
        let prior = ClassPrior {
            mean: Range::fixed(mean),
            std: Range::fixed(0.0),
        };
        cfg.intensity.default = Some(prior);
        cfg.intensity.background = Some(ClassPrior {
            mean: Range::fixed(0.0),
            std: Range::fixed(0.0),
        });
        cfg.intensity.smoothing_sigma_mm = Range::fixed(0.0);
        let zero = AxisRanges::uniform(Range::fixed(0.0));
        cfg.spatial = SpatialConfig {
            rotation_deg: zero,
            scale: AxisRanges::uniform(Range::fixed(1.0)),
            translation_mm: zero,
            shear: zero,
            nonrigid_grid: [1, 1, 1],
            nonrigid_max_mm: 0.0,
        };
        cfg.bias.log_std = Range::fixed(0.0);
        cfg.gamma = Range::fixed(1.0);
        cfg.noise_std = Range::fixed(0.0);
        cfg.resolution.enabled = false;
        cfg.artifacts.ghosting.probability = 0.0;
        cfg.artifacts.spike.probability = 0.0;
        cfg.artifacts.motion.probability = 0.0;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != GENERATOR_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported generator schema_version {}",
                self.schema_version
            )));
        }
        let i = &self.intensity;
        for (name, p) in i
            .default
            .iter()
            .map(|p| ("intensity.default", p))
            .chain(i.background.iter().map(|p| ("intensity.background", p)))
        {
            p.mean.check(name)?;
            p.std.check(name)?;
            if p.std.lo < 0.0 {
                return Err(Error::Config(format!("{name}: std must be non-negative")));
            }
        }
        for (key, p) in &i.classes {
            key.parse::<u32>()
                .map_err(|_| Error::Config(format!("intensity.classes: `{key}` is not a label id")))?;
            p.mean.check("intensity.classes")?;
            p.std.check("intensity.classes")?;
            if p.std.lo < 0.0 {
                return Err(Error::Config(format!("intensity.classes.{key}: std must be non-negative")));
            }
        }
        i.smoothing_sigma_mm.check("intensity.smoothing_sigma_mm")?;
        if i.smoothing_sigma_mm.lo < 0.0 {
            return Err(Error::Config("smoothing sigma must be non-negative".into()));
        }

        let s = &self.spatial;
        for r in s.rotation_deg.0.iter().chain(&s.translation_mm.0).chain(&s.shear.0) {
            r.check("spatial")?;
        }
        for r in &s.scale.0 {
            r.check("spatial.scale")?;
            if r.lo <= 0.0 {
                return Err(Error::Config("spatial.scale must be positive".into()));
            }
        }
        if s.nonrigid_grid.iter().any(|&d| d == 0) || !(s.nonrigid_max_mm >= 0.0) {
            return Err(Error::Config("spatial.nonrigid: grid dims >= 1 and max >= 0 required".into()));
        }

        if self.bias.grid.iter().any(|&d| d == 0) {
            return Err(Error::Config("bias.grid dims must be >= 1".into()));
        }
        self.bias.log_std.check("bias.log_std")?;
        if self.bias.log_std.lo < 0.0 {
            return Err(Error::Config("bias.log_std must be non-negative".into()));
        }
        self.gamma.check("gamma")?;
        if self.gamma.lo <= 0.0 {
            return Err(Error::Config("gamma must be positive".into()));
        }
        self.noise_std.check("noise_std")?;
        if self.noise_std.lo < 0.0 {
            return Err(Error::Config("noise_std must be non-negative".into()));
        }

        let r = &self.resolution;
        r.thickness_mm.check("resolution.thickness_mm")?;
        if r.thickness_mm.lo <= 0.0 {
            return Err(Error::Config("resolution.thickness_mm must be positive".into()));
        }
        check_axes(&r.axes, "resolution")?;

        let a = &self.artifacts;
        check_probability(a.ghosting.probability, "artifacts.ghosting")?;
        check_counts(a.ghosting.num_ghosts, "artifacts.ghosting.num_ghosts")?;
        if a.ghosting.num_ghosts.lo == 0 {
            return Err(Error::Config("artifacts.ghosting.num_ghosts must be >= 1".into()));
        }
        a.ghosting.intensity.check("artifacts.ghosting.intensity")?;
        check_axes(&a.ghosting.axes, "artifacts.ghosting")?;
        if !(0.0..=1.0).contains(&a.ghosting.restore) {
            return Err(Error::Config("artifacts.ghosting.restore must be in [0, 1]".into()));
        }
        check_probability(a.spike.probability, "artifacts.spike")?;
        check_counts(a.spike.num_spikes, "artifacts.spike.num_spikes")?;
        a.spike.intensity.check("artifacts.spike.intensity")?;
        check_probability(a.motion.probability, "artifacts.motion")?;
        check_counts(a.motion.num_movements, "artifacts.motion.num_movements")?;
        check_axes(&a.motion.axes, "artifacts.motion")?;
        if !(a.motion.rotation_deg >= 0.0 && a.motion.translation_mm >= 0.0) {
            return Err(Error::Config("artifacts.motion ranges must be non-negative".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            location: e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].lines().count().max(1);
                    format!("line {line}")
                })
                .unwrap_or_else(|| "generator config".into()),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("generator config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse { location, message } => Error::Parse {
                location: format!("{}: {location}", path.display()),
                message,
            },
            other => other,
        })
    }
}
