//! Accuracy and uncertainty-quality metrics over per-sample records.

mod errors;
mod integrity;
mod report;
mod sparsification;
mod threshold;

pub use errors::{mean_error, ErrorRecord, ErrorSummary};
pub use integrity::{integrity_risk, IRConfig};
pub use report::{write_curves_csv, MetricsReport, Provenance};
pub use sparsification::{
    ause, oracle_curve, sparsification_curve, sparsification_curves, CurveForm, SparsificationCurves,
};
pub use threshold::{fit_threshold, ThresholdFit, ThresholdMethod};
