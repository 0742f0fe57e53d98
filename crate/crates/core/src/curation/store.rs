use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::labelharm::{Manifest, QcStatus};
use crate::{Error, Result};

pub const QC_CSV_HEADER: [&str; 6] = ["subject_id", "rating", "affected_structures", "rater", "timestamp", "note"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QCRecord {
    pub subject_id: String,
    pub rating: QcStatus,
    /// Structure names; stored `;`-separated in CSV.
    #[serde(default)]
    pub affected_structures: Vec<String>,
    pub rater: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub note: String,
}

impl QCRecord {
    fn validate(&self) -> Result<()> {
        if self.subject_id.trim().is_empty() {
            return Err(Error::Validation("QC record has an empty subject_id".into()));
        }
        if let Some(s) = self.affected_structures.iter().find(|s| s.contains(';') || s.trim().is_empty()) {
            return Err(Error::Validation(format!(
                "affected structure `{s}` must be non-empty and free of `;`"
            )));
        }
        Ok(())
    }
}

/// Append-only rating history with a latest-per-subject view. Latest means
/// greatest timestamp; among equal timestamps the later append wins.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QCStore {
    history: Vec<QCRecord>,
    latest: BTreeMap<String, usize>,
}

impl QCStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = QCRecord>) -> Result<Self> {
        let mut store = Self::new();
        for r in records {
            store.append(r)?;
        }
        Ok(store)
    }

    /// Rejects a record older than the same rater's previous record for the subject.
    pub fn append(&mut self, record: QCRecord) -> Result<()> {
        record.validate()?;
        if let Some(prev) = self
            .history
            .iter()
            .rev()
            .find(|r| r.subject_id == record.subject_id && r.rater == record.rater)
        {
            if record.timestamp < prev.timestamp {
                return Err(Error::Validation(format!(
                    "rating for `{}` by `{}` at {} predates their previous rating at {}",
                    record.subject_id,
                    record.rater,
                    record.timestamp.to_rfc3339(),
                    prev.timestamp.to_rfc3339()
                )));
            }
        }
        let idx = self.history.len();
        let replace = match self.latest.get(&record.subject_id) {
            Some(&cur) => record.timestamp >= self.history[cur].timestamp,
            None => true,
        };
        if replace {
            self.latest.insert(record.subject_id.clone(), idx);
        }
        self.history.push(record);
        Ok(())
    }

    /// `now`, raised if needed to the rater's previous timestamp for the
    /// subject so a clock step backwards cannot break per-rater ordering.
    pub fn next_timestamp(&self, subject_id: &str, rater: &str, now: DateTime<Utc>) -> DateTime<Utc> {
        self.history
            .iter()
            .rev()
            .find(|r| r.subject_id == subject_id && r.rater == rater)
            .map_or(now, |prev| prev.timestamp.max(now))
    }

    pub fn history(&self) -> &[QCRecord] {
        &self.history
    }

    pub fn latest(&self, subject_id: &str) -> Option<&QCRecord> {
        self.latest.get(subject_id).map(|&i| &self.history[i])
    }

    /// Latest record per subject, ordered by subject id.
    pub fn latest_view(&self) -> Vec<&QCRecord> {
        self.latest.values().map(|&i| &self.history[i]).collect()
    }

    pub fn len(&self) -> usize {
        self.latest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latest.is_empty()
    }
}

fn write_rows<'a, W: Write>(records: impl IntoIterator<Item = &'a QCRecord>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Validation(format!("writing QC CSV: {e}"));
    w.write_record(QC_CSV_HEADER).map_err(err)?;
    for r in records {
        w.write_record([
            r.subject_id.as_str(),
            r.rating.as_str(),
            &r.affected_structures.join(";"),
            &r.rater,
            &r.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            &r.note,
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// Parses QC CSV rows in file order. Errors carry the 1-based file line.
pub fn read_records<R: Read>(input: R) -> Result<Vec<QCRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(|e| Error::Parse {
        location: "row 1".into(),
        message: e.to_string(),
    })?;
    if header.iter().map(str::trim).collect::<Vec<_>>() != QC_CSV_HEADER {
        return Err(Error::Parse {
            location: "row 1".into(),
            message: format!("expected header `{}`", QC_CSV_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let bad = |message: String| Error::Parse {
            location: format!("row {line}"),
            message,
        };
        let row = row.map_err(|e| bad(e.to_string()))?;
        if row.len() != 6 {
            return Err(bad(format!("expected 6 fields, found {}", row.len())));
        }
        let rating = match row[1].trim() {
            "good" => QcStatus::Good,
            "bad" => QcStatus::Bad,
            "unrated" => QcStatus::Unrated,
            other => return Err(bad(format!("unknown rating `{other}`"))),
        };
        let timestamp = DateTime::parse_from_rfc3339(row[4].trim())
            .map_err(|e| bad(format!("timestamp `{}`: {e}", &row[4])))?
            .with_timezone(&Utc);
        let affected_structures = if row[2].is_empty() {
            Vec::new()
        } else {
            row[2].split(';').map(str::to_string).collect()
        };
        out.push(QCRecord {
            subject_id: row[0].to_string(),
            rating,
            affected_structures,
            rater: row[3].to_string(),
            timestamp,
            note: row[5].to_string(),
        });
    }
    Ok(out)
}

/// Writes the latest view to any writer.
pub fn write_latest_csv<W: Write>(store: &QCStore, out: W) -> Result<()> {
    write_rows(store.latest_view(), out)
}

/// Writes the latest view.
pub fn export_csv(store: &QCStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_rows(store.latest_view(), std::io::BufWriter::new(file))
}

pub fn import_csv(path: impl AsRef<Path>) -> Result<QCStore> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let records = read_records(file).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })?;
    QCStore::from_records(records)
}

/// QC store backed by a history CSV; every append rewrites the file through a
/// temporary sibling and a rename, so a crash never leaves a torn file.
#[derive(Debug)]
pub struct PersistentStore {
    path: PathBuf,
    store: QCStore,
}

impl PersistentStore {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let store = if path.exists() { import_csv(&path)? } else { QCStore::new() };
        Ok(Self { path, store })
    }

    pub fn store(&self) -> &QCStore {
        &self.store
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: QCRecord) -> Result<()> {
        let mut next = self.store.clone();
        next.append(record)?;
        let tmp = self.path.with_extension("csv.tmp");
        let file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        write_rows(next.history(), std::io::BufWriter::new(file))?;
        std::fs::rename(&tmp, &self.path).map_err(|e| Error::io(&self.path, e))?;
        self.store = next;
        Ok(())
    }
}

/// Sets each entry's `qc_status` from the latest rating of its subject.
/// Ratings for subjects not in the manifest come back as warnings.
pub fn apply_ratings(manifest: &Manifest, store: &QCStore) -> (Manifest, Vec<String>) {
    let mut out = manifest.clone();
    for e in &mut out.entries {
        if let Some(r) = store.latest(&e.subject_id) {
            e.qc_status = r.rating;
        }
    }
    let warnings = store
        .latest_view()
        .into_iter()
        .filter(|r| manifest.entry(&r.subject_id).is_none())
        .map(|r| format!("rating for unknown subject `{}` ignored", r.subject_id))
        .collect();
    (out, warnings)
}
