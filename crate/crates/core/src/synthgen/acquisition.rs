use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ResolutionConfig;
use super::filter::{blur_axis, lerp_clamped, map_lines};
use crate::volgrid::{Grid, Volume};
use crate::{Error, Result};

/// FWHM of a unit-sigma Gaussian, `2 sqrt(2 ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionRecord {
    pub axis: usize,
    pub thickness_mm: f64,
    pub intermediate_dims: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct Acquisition {
    /// Thick-slice volume, spacing `thickness` along the slice axis.
    pub intermediate: Volume,
    /// Interpolated back onto the input grid.
    pub volume: Volume,
}

/// Number of thick slices covering `n` voxels of spacing `s`.
pub fn slice_count(n: usize, spacing: f64, thickness: f64) -> usize {
    let exact = n as f64 * spacing / thickness;
    ((exact - 1e-9).ceil() as usize).max(1)
}

/// Slice-profile blur (Gaussian, FWHM = thickness) along `axis`, decimation to
/// thickness spacing, and linear interpolation back to the input grid. Both
/// resampling steps clamp at the ends of each line.
pub fn acquire(vol: &Volume, axis: usize, thickness_mm: f64) -> Result<Acquisition> {
    let grid = vol.grid();
    if !grid.is_isotropic() {
        return Err(Error::contract(format!(
            "resolution simulation needs an isotropic grid, spacing is {:?}",
            grid.spacing()
        )));
    }
    if axis > 2 || !(thickness_mm > 0.0) {
        return Err(Error::contract(format!(
            "invalid acquisition axis {axis} / thickness {thickness_mm}"
        )));
    }
    let dims = grid.dims();
    let s = grid.spacing()[axis];
    let sigma_vox = thickness_mm / FWHM_PER_SIGMA / s;
    let blurred = blur_axis(vol.data(), dims, axis, sigma_vox);

    let step = thickness_mm / s;
    let m = slice_count(dims[axis], s, thickness_mm);
    let coarse = map_lines(&blurred, dims, axis, m, |line, out| {
        for (j, o) in out.iter_mut().enumerate() {
            *o = lerp_clamped(line, j as f64 * step);
        }
    });
    let mut coarse_dims = dims;
    coarse_dims[axis] = m;
    let fine = map_lines(&coarse, coarse_dims, axis, dims[axis], |line, out| {
        for (i, o) in out.iter_mut().enumerate() {
            *o = lerp_clamped(line, i as f64 / step);
        }
    });

    let mut affine = *grid.affine();
    for r in 0..3 {
        affine[(r, axis)] *= step;
    }
    let intermediate = Volume::new(Grid::new(coarse_dims, affine)?, coarse)?;
    Ok(Acquisition {
        intermediate,
        volume: vol.with_data(fine)?,
    })
}

pub fn sample_acquisition(rng: &mut impl Rng, cfg: &ResolutionConfig) -> (usize, f64) {
    let axis = cfg.axes[rng.random_range(0..cfg.axes.len())];
    (axis, cfg.thickness_mm.sample(rng))
}

pub fn simulate_acquisition(
    vol: &Volume,
    rng: &mut impl Rng,
    cfg: &ResolutionConfig,
) -> Result<(Volume, AcquisitionRecord)> {
    if !vol.grid().is_isotropic() {
        return Err(Error::contract(format!(
            "resolution simulation needs an isotropic grid, spacing is {:?}",
            vol.grid().spacing()
        )));
    }
    let (axis, thickness_mm) = sample_acquisition(rng, cfg);
    let acq = acquire(vol, axis, thickness_mm)?;
    let rec = AcquisitionRecord {
        axis,
        thickness_mm,
        intermediate_dims: acq.intermediate.grid().dims(),
    };
    Ok((acq.volume, rec))
}
