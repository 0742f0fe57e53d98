use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::{Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Which annotation set a label file belongs to: drawn on the high-field scan
/// and propagated by registration, or drawn directly on the low-field image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GtVariant {
    #[serde(rename = "GT_HF")]
    HighField,
    #[serde(rename = "GT_LF")]
    LowField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QcStatus {
    Good,
    Bad,
    #[default]
    Unrated,
}

impl QcStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QcStatus::Good => "good",
            QcStatus::Bad => "bad",
            QcStatus::Unrated => "unrated",
        }
    }
}

impl fmt::Display for QcStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QcStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "good" => Ok(QcStatus::Good),
            "bad" => Ok(QcStatus::Bad),
            "unrated" | "" => Ok(QcStatus::Unrated),
            other => Err(Error::Validation(format!("unknown rating `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub image_path: String,
    pub label_path: String,
    pub gt_variant: GtVariant,
    #[serde(default)]
    pub qc_status: QcStatus,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction_path: Option<String>,
    /// Fields this version does not know about, kept for round-tripping.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub entries: Vec<ManifestEntry>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            entries: Vec::new(),
            extra: Map::new(),
            base_dir: None,
        }
    }
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = Self {
            entries,
            ..Self::default()
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported manifest schema_version {} (expected {MANIFEST_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut seen = HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.subject_id.trim().is_empty() {
                return Err(Error::Validation(format!("entry {i}: empty subject_id")));
            }
            if e.image_path.trim().is_empty() || e.label_path.trim().is_empty() {
                return Err(Error::Validation(format!(
                    "entry {i} ({}): image_path and label_path must be non-empty",
                    e.subject_id
                )));
            }
            if !seen.insert((e.subject_id.as_str(), e.gt_variant)) {
                return Err(Error::Validation(format!(
                    "duplicate entry for subject `{}` with variant {:?}",
                    e.subject_id, e.gt_variant
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    /// Resolves a manifest path relative to the manifest's directory.
    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn split_counts(&self) -> (usize, usize) {
        let train = self.entries.iter().filter(|e| e.split == Split::Train).count();
        (train, self.entries.len() - train)
    }

    pub fn subject_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .map(|e| e.subject_id.as_str())
            .filter(|s| seen.insert(*s))
            .collect()
    }

    pub fn entry(&self, subject_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.subject_id == subject_id)
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut m = Manifest::from_json(&text).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })?;
    m.base_dir = path.parent().map(Path::to_path_buf);
    Ok(m)
}

pub fn save_manifest(m: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    m.validate()?;
    std::fs::write(path, m.to_json()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    All,
    Good,
    Bad,
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(Selector::All),
            "good" => Ok(Selector::Good),
            "bad" => Ok(Selector::Bad),
            other => Err(Error::Validation(format!("unknown selector `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub manifest: Manifest,
    /// One message per unrated entry dropped by a good/bad selector.
    pub warnings: Vec<String>,
}

/// Order-preserving subset by QC status. Unrated entries belong to neither
/// the good nor the bad subset.
pub fn filter_manifest(m: &Manifest, selector: Selector) -> FilterOutcome {
    let mut warnings = Vec::new();
    let entries = m
        .entries
        .iter()
        .filter(|e| match selector {
            Selector::All => true,
            Selector::Good | Selector::Bad => {
                if e.qc_status == QcStatus::Unrated {
                    warnings.push(format!("subject `{}` is unrated and was excluded", e.subject_id));
                    return false;
                }
                (selector == Selector::Good) == (e.qc_status == QcStatus::Good)
            }
        })
        .cloned()
        .collect();
    FilterOutcome {
        manifest: Manifest {
            entries,
            ..m.clone()
        },
        warnings,
    }
}
