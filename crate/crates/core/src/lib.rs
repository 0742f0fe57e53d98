//! Non-training machinery for domain-randomized infant brain MRI segmentation
//! at ultra-low field: volumetric I/O and resampling, label-scheme
//! harmonization, synthetic image generation, segmentation metrics with
//! normalized ranking, majority-vote fusion and annotation curation.

pub mod curation;
pub mod ensemble;
mod error;
pub mod labelharm;
pub mod segmetrics;
pub mod synthgen;
pub mod volgrid;

pub use error::{Error, Result};
