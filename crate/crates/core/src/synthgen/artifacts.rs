//! k-space artifacts. Each artifact is split into a sampler that draws its
//! parameters and a deterministic `apply_*`.

use nalgebra::Matrix4;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{ArtifactConfig, GhostingConfig, MotionConfig, Range, SpikeConfig};
use super::kspace::{forward, inverse_real, unshift};
use super::spatial::forward_affine;
use crate::volgrid::{Grid, Interp, Volume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhostingParams {
    pub axis: usize,
    pub num_ghosts: u32,
    pub intensity: f64,
    pub restore: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeParams {
    /// Unshifted k-space indices, never the DC term.
    pub positions: Vec<[usize; 3]>,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidMotion {
    pub rotation_deg: [f64; 3],
    pub translation_mm: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionParams {
    pub axis: usize,
    pub movements: Vec<RigidMotion>,
    /// Block boundaries along `axis`, in fftshifted index order, strictly
    /// increasing in `1..n`. Block `j` spans `[cuts[j-1], cuts[j])`.
    pub cuts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArtifactRecord {
    Motion(MotionParams),
    Ghosting(GhostingParams),
    Spike(SpikeParams),
}

fn clamp_unit(grid: &Grid, data: Vec<f64>) -> Volume {
    Volume::new(grid.clone(), data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
        .expect("FFT output is finite")
}

fn plane_indices(dims: [usize; 3], axis: usize, k: usize) -> impl Iterator<Item = usize> {
    let strides = [1, dims[0], dims[0] * dims[1]];
    let (u, v) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let (nu, nv) = (dims[u], dims[v]);
    (0..nu * nv).map(move |t| (t % nu) * strides[u] + (t / nu) * strides[v] + k * strides[axis])
}

/// Whether fftshifted plane `s` of `n` along the ghosting axis is attenuated.
pub fn ghost_plane_modified(s: usize, n: usize, num_ghosts: u32, restore: f64) -> bool {
    let g = num_ghosts.max(1) as usize;
    let protected = (s as f64 - (n / 2) as f64).abs() < restore * n as f64 / 2.0;
    s % g == 0 && !protected
}

pub fn sample_ghosting(rng: &mut impl Rng, cfg: &GhostingConfig) -> GhostingParams {
    GhostingParams {
        axis: cfg.axes[rng.random_range(0..cfg.axes.len())],
        num_ghosts: cfg.num_ghosts.sample(rng),
        intensity: cfg.intensity.sample(rng),
        restore: cfg.restore,
    }
}

/// Ghosting before the final clamp.
pub(crate) fn ghosting_unclamped(vol: &Volume, p: &GhostingParams) -> Vec<f64> {
    let dims = vol.grid().dims();
    let n = dims[p.axis];
    let mut k = forward(vol.data(), dims);
    let factor = 1.0 - p.intensity;
    for s in 0..n {
        if ghost_plane_modified(s, n, p.num_ghosts, p.restore) {
            for idx in plane_indices(dims, p.axis, unshift(s, n)) {
                k[idx] *= factor;
            }
        }
    }
    inverse_real(k, dims)
}

/// Attenuates every `num_ghosts`-th k-space plane perpendicular to `axis`
/// (fftshifted order, starting at 0) by `1 - intensity`, leaving the central
/// `restore` fraction untouched.
pub fn apply_ghosting(vol: &Volume, p: &GhostingParams) -> Volume {
    if p.intensity == 0.0 {
        return vol.clone();
    }
    clamp_unit(vol.grid(), ghosting_unclamped(vol, p))
}

pub fn sample_spike(rng: &mut impl Rng, cfg: &SpikeConfig, dims: [usize; 3]) -> SpikeParams {
    let n = cfg.num_spikes.sample(rng);
    let intensity = cfg.intensity.sample(rng);
    let mut positions = Vec::with_capacity(n as usize);
    if dims.iter().any(|&d| d > 1) {
        while positions.len() < n as usize {
            let p = dims.map(|d| rng.random_range(0..d));
            if p != [0, 0, 0] {
                positions.push(p);
            }
        }
    }
    SpikeParams { positions, intensity }
}

/// Adds `intensity * max|K|` (real) at each position, then takes the real part.
/// The result is min-max rescaled only if it left [0, 1], then clamped.
pub fn apply_spike(vol: &Volume, p: &SpikeParams) -> Volume {
    if p.positions.is_empty() || p.intensity == 0.0 {
        return vol.clone();
    }
    let grid = vol.grid();
    let dims = grid.dims();
    let mut k = forward(vol.data(), dims);
    let peak = k.iter().map(|c| c.norm()).fold(0.0, f64::max);
    for pos in &p.positions {
        k[grid.index(pos[0], pos[1], pos[2])] += p.intensity * peak;
    }
    let mut data = inverse_real(k, dims);
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if (lo < 0.0 || hi > 1.0) && hi - lo > 1e-12 {
        data.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    }
    clamp_unit(grid, data)
}

pub fn sample_motion(rng: &mut impl Rng, cfg: &MotionConfig, dims: [usize; 3]) -> MotionParams {
    let axis = cfg.axes[rng.random_range(0..cfg.axes.len())];
    let n = dims[axis];
    let m = (cfg.num_movements.sample(rng) as usize).min(n.saturating_sub(1));
    let rot = Range::symmetric(cfg.rotation_deg);
    let tr = Range::symmetric(cfg.translation_mm);
    let movements = (0..m)
        .map(|_| RigidMotion {
            rotation_deg: [rot.sample(rng), rot.sample(rng), rot.sample(rng)],
            translation_mm: [tr.sample(rng), tr.sample(rng), tr.sample(rng)],
        })
        .collect();
    let mut cuts: Vec<usize> = if m == 0 {
        Vec::new()
    } else {
        sample_indices(rng, n - 1, m).into_iter().map(|c| c + 1).collect()
    };
    cuts.sort_unstable();
    MotionParams { axis, movements, cuts }
}

fn backward_rigid(m: &RigidMotion, grid: &Grid) -> Matrix4<f64> {
    forward_affine(m.rotation_deg, [1.0; 3], m.translation_mm, [0.0; 3], grid.center_world())
        .try_inverse()
        .expect("rigid transforms are invertible")
}

/// Composite k-space: block `j` along the phase-encode axis comes from the
/// `j`-th moved copy (block 0 from the input).
pub fn apply_motion(vol: &Volume, p: &MotionParams) -> Volume {
    if p.movements.is_empty() {
        return vol.clone();
    }
    let grid = vol.grid();
    let dims = grid.dims();
    let n = dims[p.axis];
    let spectra: Vec<_> = std::iter::once(forward(vol.data(), dims))
        .chain(p.movements.iter().map(|m| {
            let moved = vol.transform_world(&backward_rigid(m, grid), Interp::Linear);
            forward(moved.data(), dims)
        }))
        .collect();
    let mut k = spectra[0].clone();
    for s in 0..n {
        let block = p.cuts.iter().filter(|&&c| c <= s).count().min(p.movements.len());
        if block == 0 {
            continue;
        }
        for idx in plane_indices(dims, p.axis, unshift(s, n)) {
            k[idx] = spectra[block][idx];
        }
    }
    clamp_unit(grid, inverse_real(k, dims))
}

/// Motion, ghosting, spike in that order, each gated by its probability.
pub fn sample_artifacts(rng: &mut impl Rng, cfg: &ArtifactConfig, dims: [usize; 3]) -> Vec<ArtifactRecord> {
    let mut records = Vec::new();
    if rng.random::<f64>() < cfg.motion.probability {
        records.push(ArtifactRecord::Motion(sample_motion(rng, &cfg.motion, dims)));
    }
    if rng.random::<f64>() < cfg.ghosting.probability {
        records.push(ArtifactRecord::Ghosting(sample_ghosting(rng, &cfg.ghosting)));
    }
    if rng.random::<f64>() < cfg.spike.probability {
        records.push(ArtifactRecord::Spike(sample_spike(rng, &cfg.spike, dims)));
    }
    records
}

pub fn apply_artifacts(vol: &Volume, rng: &mut impl Rng, cfg: &ArtifactConfig) -> (Volume, Vec<ArtifactRecord>) {
    let records = sample_artifacts(rng, cfg, vol.grid().dims());
    (apply_artifact_records(vol, &records), records)
}

/// Replays recorded artifacts in order.
pub fn apply_artifact_records(vol: &Volume, records: &[ArtifactRecord]) -> Volume {
    records.iter().fold(vol.clone(), |v, r| match r {
        ArtifactRecord::Motion(p) => apply_motion(&v, p),
        ArtifactRecord::Ghosting(p) => apply_ghosting(&v, p),
        ArtifactRecord::Spike(p) => apply_spike(&v, p),
    })
}
