//! Annotation-quality records, misregistration flagging and rating-based
//! dataset splits.

mod flag;
mod store;

pub use flag::{
    flag_misregistration, otsu_threshold, sentinel_score, sentinel_scores, Flag, FlagResult,
    SentinelScore, DEFAULT_SENTINELS,
};
pub use store::{
    apply_ratings, export_csv, import_csv, read_records, write_latest_csv, PersistentStore, QCRecord, QCStore,
    QC_CSV_HEADER,
};
