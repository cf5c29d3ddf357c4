use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{CurveForm, ErrorSummary, SparsificationCurves, ThresholdFit};
use crate::{AnchorId, Result};

/// Where a report came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub dataset_hash: String,
    pub version: String,
    pub lambda: f64,
    pub mc_passes: usize,
    pub alert_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub changed_anchors: Vec<AnchorId>,
    pub method: String,
    pub n_test: usize,
    pub mean_error: ErrorSummary,
    pub curve_form: CurveForm,
    pub ause: f64,
    pub alert_limit: f64,
    pub threshold: Option<ThresholdFit>,
    pub integrity_risk: Option<f64>,
    pub provenance: Provenance,
}

/// Writes `N, O_N, S_N, S_N - O_N` rows.
pub fn write_curves_csv<W: Write>(curves: &SparsificationCurves, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| crate::Error::Io(e.into());
    w.write_record(["N", "O_N", "S_N", "S_N_minus_O_N"]).map_err(io)?;
    for (k, (o, s)) in curves.oracle.iter().zip(&curves.sparsification).enumerate() {
        w.write_record([(k + 1).to_string(), o.to_string(), s.to_string(), (s - o).to_string()])
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
