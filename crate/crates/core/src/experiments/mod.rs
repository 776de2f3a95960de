//! Comparison protocols: embedding baselines, few-shot and extreme-pair
//! curves, cross-dataset transfer, and report emission.

mod baselines;
mod curves;
mod report;
mod transfer;

pub use baselines::{
    run_baselines, search_data, BaselineOutcome, BaselineReport, BaselineRow, OwnedSearchData,
};
pub use curves::{
    default_sizes, extreme_shot_curve, few_shot_curve, label_tails, CurveMode, CurvePoint, FewShotCurve,
    FewShotSolver, DEFAULT_REPEATS, DEFAULT_TAIL_QUANTILE,
};
pub use report::{emit_report, parse_reports_json, render_report, Report, ReportFormat};
pub use transfer::{transfer_matrix, TransferReport};
