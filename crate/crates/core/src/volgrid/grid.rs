use std::collections::BTreeMap;

use nalgebra::{Matrix3, Matrix4, Vector4};

use crate::{Error, Result};

const SPACING_REL_TOL: f64 = 1e-4;

/// Voxel lattice: dimensions, spacing and the voxel-to-world affine.
///
/// `spacing` is always the column norms of the affine's 3x3 block, so the two
/// can never disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dims: [usize; 3],
    spacing: [f64; 3],
    affine: Matrix4<f64>,
    inverse: Matrix4<f64>,
}

impl Grid {
    pub fn new(dims: [usize; 3], affine: Matrix4<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::contract(format!("grid dims must be positive, got {dims:?}")));
        }
        if affine.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("affine contains non-finite entries"));
        }
        let linear: Matrix3<f64> = affine.fixed_view::<3, 3>(0, 0).into_owned();
        let det = linear.determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::contract("affine 3x3 block is singular"));
        }
        let inverse = affine
            .try_inverse()
            .ok_or_else(|| Error::contract("affine is not invertible"))?;
        let spacing = [
            linear.column(0).norm(),
            linear.column(1).norm(),
            linear.column(2).norm(),
        ];
        Ok(Self {
            dims,
            spacing,
            affine,
            inverse,
        })
    }

    /// Axis-aligned grid with the first voxel centre at the world origin.
    pub fn with_spacing(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        Self::with_spacing_and_origin(dims, spacing, [0.0; 3])
    }

    pub fn with_spacing_and_origin(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
    ) -> Result<Self> {
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::contract(format!("spacing must be positive, got {spacing:?}")));
        }
        let mut affine = Matrix4::identity();
        for a in 0..3 {
            affine[(a, a)] = spacing[a];
            affine[(a, 3)] = origin[a];
        }
        Self::new(dims, affine)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &Matrix4<f64> {
        &self.affine
    }

    pub fn inverse_affine(&self) -> &Matrix4<f64> {
        &self.inverse
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    pub fn voxel_to_world(&self, p: [f64; 3]) -> [f64; 3] {
        let w = self.affine * Vector4::new(p[0], p[1], p[2], 1.0);
        [w[0], w[1], w[2]]
    }

    pub fn world_to_voxel(&self, w: [f64; 3]) -> [f64; 3] {
        let p = self.inverse * Vector4::new(w[0], w[1], w[2], 1.0);
        [p[0], p[1], p[2]]
    }

    /// World coordinate of the geometric centre of the voxel lattice.
    pub fn center_world(&self) -> [f64; 3] {
        let c = self.dims.map(|d| (d as f64 - 1.0) / 2.0);
        self.voxel_to_world(c)
    }

    /// Isotropic when all spacings agree within the grid tolerance.
    pub fn is_isotropic(&self) -> bool {
        let s0 = self.spacing[0];
        self.spacing
            .iter()
            .all(|s| ((s - s0) / s0).abs() <= SPACING_REL_TOL)
    }

    /// Same lattice: identical dims and affines equal within 1e-5 mm.
    pub fn matches(&self, other: &Grid) -> bool {
        self.dims == other.dims
            && self
                .affine
                .iter()
                .zip(other.affine.iter())
                .all(|(a, b)| (a - b).abs() <= 1e-5)
    }

    pub(crate) fn ensure_matches(&self, other: &Grid, what: &str) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "{what}: grid mismatch ({:?} vs {:?})",
                self.dims, other.dims
            )))
        }
    }
}

/// Scalar intensity volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    grid: Grid,
    data: Vec<f64>,
}

impl Volume {
    pub fn new(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::contract(format!(
                "volume data length {} does not match grid size {}",
                data.len(),
                grid.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("volume data contains non-finite values"));
        }
        Ok(Self { grid, data })
    }

    pub fn filled(grid: Grid, value: f64) -> Self {
        let data = vec![value; grid.len()];
        Self { grid, data }
    }

    pub(crate) fn from_parts_unchecked(grid: Grid, data: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), data.len());
        Self { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.grid.index(i, j, k)]
    }

    /// Applies `f` voxelwise, keeping the grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Volume {
        Volume {
            grid: self.grid.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn with_data(&self, data: Vec<f64>) -> Result<Volume> {
        Volume::new(self.grid.clone(), data)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Integer label volume with an attached vocabulary of `(id, name)` pairs.
/// Background 0 is implicit and never part of the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    grid: Grid,
    data: Vec<u32>,
    vocabulary: BTreeMap<u32, String>,
}

impl LabelMap {
    pub fn new(grid: Grid, data: Vec<u32>, vocabulary: BTreeMap<u32, String>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::contract(format!(
                "label data length {} does not match grid size {}",
                data.len(),
                grid.len()
            )));
        }
        if vocabulary.contains_key(&0) {
            return Err(Error::contract("label 0 is reserved for background"));
        }
        if let Some(bad) = data
            .iter()
            .find(|&&v| v != 0 && !vocabulary.contains_key(&v))
        {
            return Err(Error::contract(format!("label {bad} is not in the vocabulary")));
        }
        Ok(Self {
            grid,
            data,
            vocabulary,
        })
    }

    /// Builds the vocabulary from the labels present, named `label_<id>`.
    pub fn from_data(grid: Grid, data: Vec<u32>) -> Result<Self> {
        let vocabulary = data
            .iter()
            .filter(|&&v| v != 0)
            .map(|&v| (v, format!("label_{v}")))
            .collect();
        Self::new(grid, data, vocabulary)
    }

    pub(crate) fn from_parts_unchecked(
        grid: Grid,
        data: Vec<u32>,
        vocabulary: BTreeMap<u32, String>,
    ) -> Self {
        debug_assert_eq!(grid.len(), data.len());
        Self {
            grid,
            data,
            vocabulary,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    pub fn vocabulary(&self) -> &BTreeMap<u32, String> {
        &self.vocabulary
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> u32 {
        self.data[self.grid.index(i, j, k)]
    }

    /// Labels actually present in the data, background excluded.
    pub fn present_labels(&self) -> Vec<u32> {
        let mut seen: Vec<u32> = self.data.iter().copied().filter(|&v| v != 0).collect();
        seen.sort_unstable();
        seen.dedup();
        seen
    }

    pub fn count(&self, label: u32) -> usize {
        self.data.iter().filter(|&&v| v == label).count()
    }

    /// Binary indicator volume (1.0 where the label is present).
    pub fn indicator(&self, label: u32) -> Volume {
        Volume::from_parts_unchecked(
            self.grid.clone(),
            self.data
                .iter()
                .map(|&v| if v == label { 1.0 } else { 0.0 })
                .collect(),
        )
    }

    pub fn with_vocabulary(mut self, vocabulary: BTreeMap<u32, String>) -> Result<Self> {
        if let Some(bad) = self
            .data
            .iter()
            .find(|&&v| v != 0 && !vocabulary.contains_key(&v))
        {
            return Err(Error::contract(format!("label {bad} is not in the vocabulary")));
        }
        self.vocabulary = vocabulary;
        Ok(self)
    }
}

/// Dense backward displacement field in millimetres: output voxel `x` samples
/// the source at `world(x) + field(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    grid: Grid,
    vectors: Vec<[f64; 3]>,
}

impl DisplacementField {
    pub fn new(grid: Grid, vectors: Vec<[f64; 3]>) -> Result<Self> {
        if vectors.len() != grid.len() {
            return Err(Error::contract("displacement field length does not match grid"));
        }
        if vectors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::contract("displacement field contains non-finite values"));
        }
        Ok(Self { grid, vectors })
    }

    pub fn zeros(grid: Grid) -> Self {
        let vectors = vec![[0.0; 3]; grid.len()];
        Self { grid, vectors }
    }

    pub fn uniform(grid: Grid, offset: [f64; 3]) -> Self {
        let vectors = vec![offset; grid.len()];
        Self { grid, vectors }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn vectors(&self) -> &[[f64; 3]] {
        &self.vectors
    }

    pub fn is_zero(&self) -> bool {
        self.vectors.iter().all(|v| v.iter().all(|&c| c == 0.0))
    }
}

/// Either interpretation of a voxel file.
#[derive(Debug, Clone, PartialEq)]
pub enum Image {
    Volume(Volume),
    Labels(LabelMap),
}

impl Image {
    pub fn grid(&self) -> &Grid {
        match self {
            Image::Volume(v) => v.grid(),
            Image::Labels(l) => l.grid(),
        }
    }
}

impl From<Volume> for Image {
    fn from(v: Volume) -> Self {
        Image::Volume(v)
    }
}

impl From<LabelMap> for Image {
    fn from(l: LabelMap) -> Self {
        Image::Labels(l)
    }
}
