//! Benchmark harness: evaluation budgets, agreement metrics and the
//! method-comparison runner.

mod comparison;
mod counter;
mod metrics;

pub use comparison::{
    format_float, run_comparison, ComparisonConfig, ComparisonReport, GroundTruthPolicy,
    MethodSpec, ModelSource, ReportRow, CSV_HEADER,
};
pub use counter::EvalCounter;
pub use metrics::{average_ranks, rmse, spearman};
