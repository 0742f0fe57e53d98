use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::volgrid::LabelMap;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemeClass {
    pub id: u32,
    pub name: String,
    /// Carried in training labels but skipped by evaluation.
    pub excluded_from_eval: bool,
}

/// Output classes plus a source-id → output-id table; unmapped ids go to 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelScheme {
    name: String,
    classes: Vec<SchemeClass>,
    mapping: BTreeMap<u32, u32>,
}

impl LabelScheme {
    pub fn new(
        name: impl Into<String>,
        classes: Vec<SchemeClass>,
        mapping: BTreeMap<u32, u32>,
    ) -> Result<Self> {
        for (pos, class) in classes.iter().enumerate() {
            if class.id != pos as u32 + 1 {
                return Err(Error::Validation(format!(
                    "scheme class ids must be contiguous from 1; position {} has id {}",
                    pos + 1,
                    class.id
                )));
            }
        }
        let n = classes.len() as u32;
        if let Some((src, dst)) = mapping.iter().find(|(_, &dst)| dst > n) {
            return Err(Error::Validation(format!(
                "mapping {src} -> {dst} targets an id outside 0..={n}"
            )));
        }
        Ok(Self {
            name: name.into(),
            classes,
            mapping,
        })
    }

    /// Scheme whose mapping is the identity on its own class ids.
    pub fn identity(name: impl Into<String>, classes: Vec<SchemeClass>) -> Result<Self> {
        let mapping = classes.iter().map(|c| (c.id, c.id)).collect();
        Self::new(name, classes, mapping)
    }

    /// Same classes, mapping replaced by the rows of a
    /// `source_id,source_name,target_id` CSV (lines starting with `#` are skipped).
    pub fn with_mapping_csv(&self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        self.with_mapping_reader(file, &path.display().to_string())
    }

    pub fn with_mapping_reader(&self, reader: impl std::io::Read, origin: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            source_id: u32,
            #[allow(dead_code)]
            source_name: String,
            target_id: u32,
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Parse {
            location: format!("{origin}: header"),
            message: e.to_string(),
        })?;
        for required in ["source_id", "source_name", "target_id"] {
            if !headers.iter().any(|h| h == required) {
                return Err(Error::Parse {
                    location: format!("{origin}: header"),
                    message: format!("missing column `{required}`"),
                });
            }
        }
        let mut mapping = BTreeMap::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::Parse {
                location: format!("{origin}: row {}", i + 1),
                message: e.to_string(),
            })?;
            if mapping.insert(row.source_id, row.target_id).is_some() {
                return Err(Error::Parse {
                    location: format!("{origin}: row {}", i + 1),
                    message: format!("source id {} listed twice", row.source_id),
                });
            }
        }
        Self::new(self.name.clone(), self.classes.clone(), mapping)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn classes(&self) -> &[SchemeClass] {
        &self.classes
    }

    pub fn mapping(&self) -> &BTreeMap<u32, u32> {
        &self.mapping
    }

    #[inline]
    pub fn map(&self, source: u32) -> u32 {
        self.mapping.get(&source).copied().unwrap_or(0)
    }

    pub fn vocabulary(&self) -> BTreeMap<u32, String> {
        self.classes.iter().map(|c| (c.id, c.name.clone())).collect()
    }

    /// Class ids that take part in evaluation.
    pub fn evaluated_labels(&self) -> Vec<u32> {
        self.classes
            .iter()
            .filter(|c| !c.excluded_from_eval)
            .map(|c| c.id)
            .collect()
    }

    pub fn class_by_name(&self, name: &str) -> Option<&SchemeClass> {
        self.classes.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }
}

/// Replaces every voxel by its mapped id; the output vocabulary is the scheme's.
pub fn remap(labels: &LabelMap, scheme: &LabelScheme) -> LabelMap {
    let max = labels.data().iter().copied().max().unwrap_or(0) as usize;
    let data = if max <= 1 << 20 {
        let table: Vec<u32> = (0..=max as u32).map(|v| scheme.map(v)).collect();
        labels.data().iter().map(|&v| table[v as usize]).collect()
    } else {
        labels.data().iter().map(|&v| scheme.map(v)).collect()
    };
    LabelMap::new(labels.grid().clone(), data, scheme.vocabulary())
        .expect("scheme mapping targets are validated at construction")
}

pub struct BuiltinSchemes {
    pub lisa: LabelScheme,
    pub lisa_plus: LabelScheme,
}

impl BuiltinSchemes {
    pub fn by_name(&self, name: &str) -> Option<&LabelScheme> {
        match name.to_ascii_lowercase().replace(['-', '+'], "_").as_str() {
            "lisa" => Some(&self.lisa),
            "lisa_plus" | "lisa_" | "lisaplus" => Some(&self.lisa_plus),
            _ => None,
        }
    }
}

const LISA_CLASSES: [(&str, bool); 8] = [
    ("left hippocampus", false),
    ("right hippocampus", false),
    ("left lateral ventricle", true),
    ("right lateral ventricle", true),
    ("left caudate", false),
    ("right caudate", false),
    ("left lentiform", false),
    ("right lentiform", false),
];

const WHOLE_BRAIN_GROUPS: [&str; 6] = [
    "white matter",
    "cortical gray matter",
    "csf",
    "cerebellum",
    "brainstem",
    "deep gray matter",
];

/// LISA (ids 1-8) and LISA+ (LISA plus six whole-brain groups, ids 9-14).
/// Both carry identity mappings; load a source table with
/// [`LabelScheme::with_mapping_csv`] to remap dataset-specific ids.
pub fn builtin_schemes() -> BuiltinSchemes {
    let lisa_classes: Vec<SchemeClass> = LISA_CLASSES
        .iter()
        .enumerate()
        .map(|(i, (name, excluded))| SchemeClass {
            id: i as u32 + 1,
            name: name.to_string(),
            excluded_from_eval: *excluded,
        })
        .collect();
    let mut plus_classes = lisa_classes.clone();
    plus_classes.extend(WHOLE_BRAIN_GROUPS.iter().enumerate().map(|(i, name)| SchemeClass {
        id: 9 + i as u32,
        name: name.to_string(),
        excluded_from_eval: false,
    }));
    BuiltinSchemes {
        lisa: LabelScheme::identity("LISA", lisa_classes).expect("static scheme"),
        lisa_plus: LabelScheme::identity("LISA_PLUS", plus_classes).expect("static scheme"),
    }
}
