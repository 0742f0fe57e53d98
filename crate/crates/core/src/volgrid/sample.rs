use nalgebra::{Matrix4, Vector4};

use super::grid::{DisplacementField, Grid, Image, LabelMap, Volume};
use crate::{Error, Result};

/// Slack, in voxels, allowed when deciding whether a sample lies inside the grid.
const BOUNDS_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interp {
    Linear,
    Nearest,
}

/// Trilinear sample at continuous voxel position `p`; 0 outside `[0, n-1]`.
pub(crate) fn sample_linear(data: &[f64], dims: [usize; 3], p: [f64; 3]) -> f64 {
    let mut base = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..3 {
        let n = dims[a];
        let x = p[a];
        if !(x >= -BOUNDS_EPS && x <= (n - 1) as f64 + BOUNDS_EPS) {
            return 0.0;
        }
        let x = x.clamp(0.0, (n - 1) as f64);
        let f = x.floor();
        let mut i = f as usize;
        let mut t = x - f;
        if i >= n - 1 {
            i = n - 1;
            t = 0.0;
        }
        base[a] = i;
        frac[a] = t;
    }
    let stride = [1, dims[0], dims[0] * dims[1]];
    let mut acc = 0.0;
    for corner in 0..8 {
        let mut w = 1.0;
        let mut idx = 0;
        for a in 0..3 {
            let hi = (corner >> a) & 1 == 1;
            if hi {
                if frac[a] == 0.0 {
                    w = 0.0;
                    break;
                }
                w *= frac[a];
                idx += (base[a] + 1) * stride[a];
            } else {
                w *= 1.0 - frac[a];
                idx += base[a] * stride[a];
            }
        }
        if w != 0.0 {
            acc += w * data[idx];
        }
    }
    acc
}

/// Nearest voxel to continuous position `p`, or `None` when outside the grid.
pub(crate) fn nearest_index(dims: [usize; 3], p: [f64; 3]) -> Option<usize> {
    let mut idx = [0usize; 3];
    for a in 0..3 {
        let r = (p[a] + 0.5).floor();
        if !(r >= 0.0 && r < dims[a] as f64) {
            return None;
        }
        idx[a] = r as usize;
    }
    Some(idx[0] + dims[0] * (idx[1] + dims[1] * idx[2]))
}

#[inline]
fn apply(m: &Matrix4<f64>, p: [f64; 3]) -> [f64; 3] {
    let v = m * Vector4::new(p[0], p[1], p[2], 1.0);
    [v[0], v[1], v[2]]
}

/// Source voxel positions for every target voxel, in target storage order.
fn source_positions<'a>(
    target: &'a Grid,
    to_source: Matrix4<f64>,
) -> impl Iterator<Item = [f64; 3]> + 'a {
    (0..target.len()).map(move |idx| {
        let [i, j, k] = target.coords(idx);
        apply(&to_source, [i as f64, j as f64, k as f64])
    })
}

fn field_positions<'a>(
    grid: &'a Grid,
    field: &'a DisplacementField,
) -> impl Iterator<Item = [f64; 3]> + 'a {
    let affine = *grid.affine();
    let inverse = *grid.inverse_affine();
    field.vectors().iter().enumerate().map(move |(idx, d)| {
        let [i, j, k] = grid.coords(idx);
        let w = apply(&affine, [i as f64, j as f64, k as f64]);
        apply(&inverse, [w[0] + d[0], w[1] + d[1], w[2] + d[2]])
    })
}

impl Volume {
    /// Samples this volume on `target`; samples outside the source read 0.
    pub fn resample(&self, target: &Grid, interp: Interp) -> Volume {
        let to_source = self.grid().inverse_affine() * target.affine();
        let dims = self.grid().dims();
        let data = self.data();
        let out = source_positions(target, to_source)
            .map(|p| match interp {
                Interp::Linear => sample_linear(data, dims, p),
                Interp::Nearest => nearest_index(dims, p).map_or(0.0, |i| data[i]),
            })
            .collect();
        Volume::from_parts_unchecked(target.clone(), out)
    }

    /// Same grid, content pulled through a world-space map: the output at
    /// world point `w` reads the source at `world_map * w`.
    pub fn transform_world(&self, world_map: &Matrix4<f64>, interp: Interp) -> Volume {
        let grid = self.grid();
        let to_source = grid.inverse_affine() * world_map * grid.affine();
        let dims = grid.dims();
        let data = self.data();
        let out = source_positions(grid, to_source)
            .map(|p| match interp {
                Interp::Linear => sample_linear(data, dims, p),
                Interp::Nearest => nearest_index(dims, p).map_or(0.0, |i| data[i]),
            })
            .collect();
        Volume::from_parts_unchecked(grid.clone(), out)
    }

    pub fn warp(&self, field: &DisplacementField, interp: Interp) -> Result<Volume> {
        self.grid().ensure_matches(field.grid(), "warp")?;
        let dims = self.grid().dims();
        let data = self.data();
        let out = field_positions(self.grid(), field)
            .map(|p| match interp {
                Interp::Linear => sample_linear(data, dims, p),
                Interp::Nearest => nearest_index(dims, p).map_or(0.0, |i| data[i]),
            })
            .collect();
        Ok(Volume::from_parts_unchecked(self.grid().clone(), out))
    }
}

impl LabelMap {
    /// Nearest-neighbour resampling; linear interpolation is refused.
    pub fn resample(&self, target: &Grid, interp: Interp) -> Result<LabelMap> {
        if interp != Interp::Nearest {
            return Err(Error::contract("label maps can only be resampled with nearest interpolation"));
        }
        let to_source = self.grid().inverse_affine() * target.affine();
        let dims = self.grid().dims();
        let data = self.data();
        let out = source_positions(target, to_source)
            .map(|p| nearest_index(dims, p).map_or(0, |i| data[i]))
            .collect();
        Ok(LabelMap::from_parts_unchecked(
            target.clone(),
            out,
            self.vocabulary().clone(),
        ))
    }

    pub fn warp(&self, field: &DisplacementField, interp: Interp) -> Result<LabelMap> {
        if interp != Interp::Nearest {
            return Err(Error::contract("label maps can only be warped with nearest interpolation"));
        }
        self.grid().ensure_matches(field.grid(), "warp")?;
        let dims = self.grid().dims();
        let data = self.data();
        let out = field_positions(self.grid(), field)
            .map(|p| nearest_index(dims, p).map_or(0, |i| data[i]))
            .collect();
        Ok(LabelMap::from_parts_unchecked(
            self.grid().clone(),
            out,
            self.vocabulary().clone(),
        ))
    }
}

/// Resamples either image kind onto `target`.
pub fn resample(image: &Image, target: &Grid, interp: Interp) -> Result<Image> {
    match image {
        Image::Volume(v) => Ok(Image::Volume(v.resample(target, interp))),
        Image::Labels(l) => l.resample(target, interp).map(Image::Labels),
    }
}

/// Warps either image kind with a backward displacement field.
pub fn warp(image: &Image, field: &DisplacementField, interp: Interp) -> Result<Image> {
    match image {
        Image::Volume(v) => v.warp(field, interp).map(Image::Volume),
        Image::Labels(l) => l.warp(field, interp).map(Image::Labels),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(dims: [usize; 3], coeff: [f64; 4]) -> Volume {
        let grid = Grid::with_spacing(dims, [1.0; 3]).unwrap();
        let data = (0..grid.len())
            .map(|idx| {
                let [i, j, k] = grid.coords(idx);
                coeff[0] * i as f64 + coeff[1] * j as f64 + coeff[2] * k as f64 + coeff[3]
            })
            .collect();
        Volume::new(grid, data).unwrap()
    }

    #[test]
    fn identity_resample() {
        let v = ramp([5, 6, 7], [0.3, -1.0, 2.0, 0.5]);
        let out = v.resample(v.grid(), Interp::Linear);
        for (a, b) in out.data().iter().zip(v.data()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn coarse_ramp_hits_closed_form() {
        // f(i,j,k) = 0.5 i + 2 j - k + 3 evaluated at world (2i', 2j', 2k').
        let v = ramp([64, 64, 64], [0.5, 2.0, -1.0, 3.0]);
        let target = Grid::with_spacing([32, 32, 32], [2.0; 3]).unwrap();
        let out = v.resample(&target, Interp::Linear);
        for idx in 0..target.len() {
            let [i, j, k] = target.coords(idx);
            let expected = 0.5 * (2 * i) as f64 + 2.0 * (2 * j) as f64 - (2 * k) as f64 + 3.0;
            assert!((out.data()[idx] - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn half_voxel_offset_interpolates_ramp() {
        let v = ramp([8, 8, 8], [1.0, 0.0, 0.0, 0.0]);
        let target = Grid::with_spacing_and_origin([7, 8, 8], [1.0; 3], [0.5, 0.0, 0.0]).unwrap();
        let out = v.resample(&target, Interp::Linear);
        assert!((out.get(0, 0, 0) - 0.5).abs() < 1e-12);
        assert!((out.get(6, 3, 3) - 6.5).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_reads_zero() {
        let v = Volume::filled(Grid::with_spacing([4, 4, 4], [1.0; 3]).unwrap(), 7.0);
        let target = Grid::with_spacing_and_origin([4, 4, 4], [1.0; 3], [2.0, 0.0, 0.0]).unwrap();
        let out = v.resample(&target, Interp::Linear);
        assert_eq!(out.get(1, 0, 0), 7.0);
        assert_eq!(out.get(2, 0, 0), 0.0);
        let out = v.resample(&target, Interp::Nearest);
        assert_eq!(out.get(1, 0, 0), 7.0);
        assert_eq!(out.get(2, 0, 0), 0.0);
    }

    #[test]
    fn labels_refuse_linear() {
        let g = Grid::with_spacing([2, 2, 2], [1.0; 3]).unwrap();
        let l = LabelMap::from_data(g.clone(), vec![1; 8]).unwrap();
        assert!(matches!(l.resample(&g, Interp::Linear), Err(Error::Contract(_))));
        assert!(l.warp(&DisplacementField::zeros(g), Interp::Linear).is_err());
    }

    #[test]
    fn uniform_field_shifts_by_index() {
        let v = ramp([10, 3, 3], [1.0, 10.0, 100.0, 0.0]);
        let field = DisplacementField::uniform(v.grid().clone(), [2.0, 0.0, 0.0]);
        for interp in [Interp::Linear, Interp::Nearest] {
            let out = v.warp(&field, interp).unwrap();
            for k in 0..3 {
                for j in 0..3 {
                    for i in 0..10 {
                        let expected = if i + 2 < 10 { v.get(i + 2, j, k) } else { 0.0 };
                        assert!((out.get(i, j, k) - expected).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn warp_rejects_mismatched_field() {
        let v = Volume::filled(Grid::with_spacing([2, 2, 2], [1.0; 3]).unwrap(), 0.0);
        let other = Grid::with_spacing([3, 2, 2], [1.0; 3]).unwrap();
        assert!(v.warp(&DisplacementField::zeros(other), Interp::Linear).is_err());
    }
}
