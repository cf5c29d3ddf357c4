use serde::{Deserialize, Serialize};

use super::ErrorRecord;
use crate::{Error, Result};

/// How residual errors are aggregated after removal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveForm {
    /// Square root of the mean of the raw (unsquared) distances.
    #[default]
    Printed,
    /// Root mean square of the distances.
    Rmse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsificationCurves {
    /// `oracle[k]` is the curve at `N = k + 1`.
    pub oracle: Vec<f64>,
    pub sparsification: Vec<f64>,
    pub ause: f64,
}

/// Residual curve after removing the first `N` errors of `ordered`, for
/// `N = 1 ..= len - 1`.
fn removal_curve(ordered: &[f64], form: CurveForm) -> Vec<f64> {
    let n_test = ordered.len();
    let mut suffix = vec![0.0; n_test + 1];
    for i in (0..n_test).rev() {
        let term = match form {
            CurveForm::Printed => ordered[i],
            CurveForm::Rmse => ordered[i] * ordered[i],
        };
        suffix[i] = suffix[i + 1] + term;
    }
    (1..n_test).map(|n| (suffix[n] / (n_test - n) as f64).sqrt()).collect()
}

fn check_len(records: &[ErrorRecord]) -> Result<()> {
    if records.len() < 2 {
        return Err(Error::domain(format!(
            "sparsification needs at least 2 records, got {}",
            records.len()
        )));
    }
    Ok(())
}

/// Errors removed largest first.
pub fn oracle_curve(records: &[ErrorRecord], form: CurveForm) -> Result<Vec<f64>> {
    check_len(records)?;
    let mut e: Vec<f64> = records.iter().map(|r| r.error).collect();
    e.sort_by(|a, b| b.total_cmp(a));
    Ok(removal_curve(&e, form))
}

/// Errors removed in order of decreasing uncertainty; ties keep the
/// original record order.
pub fn sparsification_curve(records: &[ErrorRecord], form: CurveForm) -> Result<Vec<f64>> {
    check_len(records)?;
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[b].uncertainty.total_cmp(&records[a].uncertainty));
    let e: Vec<f64> = order.iter().map(|&i| records[i].error).collect();
    Ok(removal_curve(&e, form))
}

pub fn sparsification_curves(records: &[ErrorRecord], form: CurveForm) -> Result<SparsificationCurves> {
    let oracle = oracle_curve(records, form)?;
    let sparsification = sparsification_curve(records, form)?;
    let ause = sparsification.iter().zip(&oracle).map(|(s, o)| s - o).sum::<f64>() / oracle.len() as f64;
    Ok(SparsificationCurves {
        oracle,
        sparsification,
        ause,
    })
}

/// Mean gap between the sparsification and oracle curves.
pub fn ause(records: &[ErrorRecord], form: CurveForm) -> Result<f64> {
    Ok(sparsification_curves(records, form)?.ause)
}
