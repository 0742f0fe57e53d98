use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{Range, SpatialConfig};
use super::filter::upsample_control;
use crate::volgrid::{DisplacementField, Grid};
use crate::{Error, Result};

/// Sampled spatial parameters; enough to rebuild the transform on any grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialRecord {
    pub rotation_deg: [f64; 3],
    pub scale: [f64; 3],
    pub translation_mm: [f64; 3],
    pub shear: [f64; 3],
    pub control_dims: [usize; 3],
    /// Control-point displacements in mm, axis 0 fastest.
    pub control_displacement: Vec<[f64; 3]>,
}

impl SpatialRecord {
    pub fn identity() -> Self {
        Self {
            rotation_deg: [0.0; 3],
            scale: [1.0; 3],
            translation_mm: [0.0; 3],
            shear: [0.0; 3],
            control_dims: [1, 1, 1],
            control_displacement: vec![[0.0; 3]],
        }
    }
}

/// Backward world map plus a dense non-rigid displacement. The output at world
/// point `w` reads the source at `affine * w + displacement(w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialTransform {
    pub affine: Matrix4<f64>,
    pub displacement: DisplacementField,
}

/// Rotation `Rz * Ry * Rx`, angles in degrees.
pub(crate) fn rotation(deg: [f64; 3]) -> Matrix3<f64> {
    let [a, b, c] = deg.map(f64::to_radians);
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, a.cos(), -a.sin(), 0.0, a.sin(), a.cos());
    let ry = Matrix3::new(b.cos(), 0.0, b.sin(), 0.0, 1.0, 0.0, -b.sin(), 0.0, b.cos());
    let rz = Matrix3::new(c.cos(), -c.sin(), 0.0, c.sin(), c.cos(), 0.0, 0.0, 0.0, 1.0);
    rz * ry * rx
}

fn translation(t: Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    m
}

/// Forward content map about `center`: `T(c + t) * R * Sh * S * T(-c)`.
/// A positive translation moves image content towards positive world coordinates.
pub(crate) fn forward_affine(
    rotation_deg: [f64; 3],
    scale: [f64; 3],
    translation_mm: [f64; 3],
    shear: [f64; 3],
    center: [f64; 3],
) -> Matrix4<f64> {
    let sh = Matrix3::new(1.0, shear[0], shear[1], 0.0, 1.0, shear[2], 0.0, 0.0, 1.0);
    let s = Matrix3::from_diagonal(&Vector3::from(scale));
    let linear = rotation(rotation_deg) * sh * s;
    let c = Vector3::from(center);
    translation(c + Vector3::from(translation_mm)) * linear.to_homogeneous() * translation(-c)
}

impl SpatialTransform {
    pub fn identity(grid: &Grid) -> Self {
        Self {
            affine: Matrix4::identity(),
            displacement: DisplacementField::zeros(grid.clone()),
        }
    }

    pub fn from_record(rec: &SpatialRecord, grid: &Grid) -> Result<Self> {
        let forward = forward_affine(
            rec.rotation_deg,
            rec.scale,
            rec.translation_mm,
            rec.shear,
            grid.center_world(),
        );
        let affine = forward
            .try_inverse()
            .ok_or_else(|| Error::contract("sampled spatial transform is singular"))?;
        let n_control: usize = rec.control_dims.iter().product();
        if rec.control_displacement.len() != n_control {
            return Err(Error::contract(format!(
                "control displacement has {} points, control grid {:?} needs {n_control}",
                rec.control_displacement.len(),
                rec.control_dims
            )));
        }
        let dims = grid.dims();
        let comps: Vec<Vec<f64>> = (0..3)
            .map(|a| {
                let vals: Vec<f64> = rec.control_displacement.iter().map(|d| d[a]).collect();
                upsample_control(&vals, rec.control_dims, dims)
            })
            .collect();
        let vectors = (0..grid.len())
            .map(|i| [comps[0][i], comps[1][i], comps[2][i]])
            .collect();
        Ok(Self {
            affine,
            displacement: DisplacementField::new(grid.clone(), vectors)?,
        })
    }

    /// Dense backward field `d(w) = affine * w - w + displacement(w)`, usable
    /// with [`crate::volgrid::warp`] for labels and intensities alike.
    pub fn to_field(&self) -> DisplacementField {
        let grid = self.displacement.grid();
        let vectors = self
            .displacement
            .vectors()
            .iter()
            .enumerate()
            .map(|(idx, d)| {
                let [i, j, k] = grid.coords(idx);
                let w = grid.voxel_to_world([i as f64, j as f64, k as f64]);
                let b = self.affine * Vector4::new(w[0], w[1], w[2], 1.0);
                [b[0] - w[0] + d[0], b[1] - w[1] + d[1], b[2] - w[2] + d[2]]
            })
            .collect();
        DisplacementField::new(grid.clone(), vectors).expect("finite transform yields finite field")
    }
}

pub fn sample_spatial_record(rng: &mut impl Rng, cfg: &SpatialConfig) -> SpatialRecord {
    let rotation_deg = cfg.rotation_deg.sample(rng);
    let scale = cfg.scale.sample(rng);
    let translation_mm = cfg.translation_mm.sample(rng);
    let shear = cfg.shear.sample(rng);
    let r = Range::symmetric(cfg.nonrigid_max_mm);
    let n: usize = cfg.nonrigid_grid.iter().product();
    let control_displacement = (0..n)
        .map(|_| [r.sample(rng), r.sample(rng), r.sample(rng)])
        .collect();
    SpatialRecord {
        rotation_deg,
        scale,
        translation_mm,
        shear,
        control_dims: cfg.nonrigid_grid,
        control_displacement,
    }
}

pub fn sample_transform(rng: &mut impl Rng, cfg: &SpatialConfig, grid: &Grid) -> Result<SpatialTransform> {
    SpatialTransform::from_record(&sample_spatial_record(rng, cfg), grid)
}
