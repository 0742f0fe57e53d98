//! Label schemes (LISA, LISA+) and dataset manifests.

mod manifest;
mod scheme;

pub use manifest::{
    filter_manifest, load_manifest, save_manifest, FilterOutcome, GtVariant, Manifest,
    ManifestEntry, QcStatus, Selector, Split, MANIFEST_SCHEMA_VERSION,
};
pub use scheme::{builtin_schemes, remap, BuiltinSchemes, LabelScheme, SchemeClass};
