//! Volumetric data model, NIfTI-1 I/O, and resampling/warping primitives.
//!
//! Voxel data is stored with axis 0 varying fastest (`i + nx * (j + ny * k)`),
//! matching the on-disk NIfTI layout. Voxel index `(i, j, k)` maps to world
//! millimetres through `affine * (i, j, k, 1)`; interpolation is voxel-centre
//! based and samples falling outside the source grid read as 0.

mod grid;
mod nifti;
mod sample;

pub use grid::{DisplacementField, Grid, Image, LabelMap, Volume};
pub use nifti::{
    decode_nifti, encode_labels, encode_volume, read_header, read_labels, read_nifti,
    read_volume, write_labels, write_nifti, write_volume, FloatPrecision, HeaderInfo,
    Interpretation,
};
pub use sample::{resample, warp, Interp};
