//! Tables, heatmaps and distribution summaries built from a store.

mod distribution;
mod heatmap;
mod summary;
mod table;

pub use distribution::{
    distribution_csv, distribution_summary, quantile_type7, DistributionSummary, GroupBy, DISTRIBUTION_CSV_HEADER,
};
pub use heatmap::{heatmap_matrix, palette, render_heatmap_svg, HeatmapMatrix, Normalization};
pub use summary::{
    read_stats_csv, summarize_cells, summarize_store, write_stats_csv, CellSummary, SummaryOptions, STATS_CSV_HEADER,
};
pub use table::{aggregate_table, format_value, AggregateTable, Metric, ABSENT};

use crate::runner::RunnerError;
use crate::stats::StatsError;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no cells match {0}")]
    EmptySelection(String),
    #[error("nothing to report")]
    Empty,
    #[error("stats file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("unknown {what} `{value}`")]
    UnknownOption { what: &'static str, value: String },
    #[error(transparent)]
    Store(#[from] RunnerError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}
