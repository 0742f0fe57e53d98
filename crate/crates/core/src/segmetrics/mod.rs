//! Segmentation metrics (DSC, HD, HD95, ASSD, RVE), per-subject reports and
//! the normalized-average leaderboard score.

mod distance;
mod leaderboard;
mod overlap;
mod report;

pub use distance::{
    assd, hausdorff, hd95, percentile_linear, squared_edt, surface_distances, surface_mask,
    SurfaceDistanceSet,
};
pub use leaderboard::{norm_avg, norm_avg_columns, Aggregation, ColumnKey, Leaderboard, LeaderboardRow};
pub use overlap::{dice, rve};
pub use report::{
    evaluate, evaluate_scheme, write_reports_csv, Metric, MetricEntry, MetricValue, MetricsReport,
    MissingReason, REPORT_CSV_HEADER,
};
