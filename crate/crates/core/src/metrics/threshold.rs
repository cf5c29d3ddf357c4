use log::warn;
use serde::{Deserialize, Serialize};

use super::ErrorRecord;
use crate::{Error, Result};

const MAX_ITERATIONS: usize = 50;
const TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMethod {
    Logistic,
    /// Balanced-error search used when the logistic fit is unusable.
    Bisection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    /// Uncertainty norm (meters) above which a warning is raised.
    pub gamma: f64,
    pub method: ThresholdMethod,
    /// Logistic coefficients on the standardized uncertainty.
    pub intercept: Option<f64>,
    pub slope: Option<f64>,
    /// Wald statistic of the slope.
    pub z: Option<f64>,
    /// False when the slope is not significant or the fit fell back.
    pub reliable: bool,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

struct Logistic {
    intercept: f64,
    slope: f64,
    slope_se: f64,
}

/// Newton iterations for `P(y = 1 | u) = sigmoid(a + b u)`; `None` when the
/// iteration does not converge or the curvature becomes singular.
fn newton(u: &[f64], y: &[bool]) -> Option<Logistic> {
    let (mut a, mut b) = (0.0, 0.0);
    for _ in 0..MAX_ITERATIONS {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&ui, &yi) in u.iter().zip(y) {
            let p = sigmoid(a + b * ui);
            let r = f64::from(u8::from(yi)) - p;
            let w = p * (1.0 - p);
            g0 += r;
            g1 += r * ui;
            h00 += w;
            h01 += w * ui;
            h11 += w * ui * ui;
        }
        let det = h00 * h11 - h01 * h01;
        if !(det > 1e-12 * (h00 * h11).max(f64::MIN_POSITIVE)) {
            return None;
        }
        let da = (h11 * g0 - h01 * g1) / det;
        let db = (h00 * g1 - h01 * g0) / det;
        a += da;
        b += db;
        if !(a.is_finite() && b.is_finite()) {
            return None;
        }
        if da.abs().max(db.abs()) < TOLERANCE {
            return Some(Logistic {
                intercept: a,
                slope: b,
                slope_se: (h00 / det).sqrt(),
            });
        }
    }
    None
}

/// First sorted uncertainty where the miss rate catches up with the false
/// alarm rate; returns the midpoint to the next distinct value.
fn balanced_threshold(records: &[ErrorRecord], alert_limit: f64) -> f64 {
    let mut sorted: Vec<(f64, bool)> = records.iter().map(|r| (r.uncertainty, r.error > alert_limit)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let pos_total = sorted.iter().filter(|s| s.1).count() as f64;
    let neg_total = sorted.len() as f64 - pos_total;
    let (mut pos_below, mut neg_below) = (0.0, 0.0);
    let mut i = 0;
    while i < sorted.len() {
        let value = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == value {
            if sorted[i].1 {
                pos_below += 1.0;
            } else {
                neg_below += 1.0;
            }
            i += 1;
        }
        let balance = pos_below / pos_total - (neg_total - neg_below) / neg_total;
        if balance >= 0.0 {
            return match sorted.get(i) {
                Some(next) => 0.5 * (value + next.0),
                None => value,
            };
        }
    }
    sorted.last().map_or(0.0, |s| s.0)
}

/// Fits the warning threshold on the uncertainty norm that separates
/// records with error above `alert_limit` from the rest.
pub fn fit_threshold(records: &[ErrorRecord], alert_limit: f64) -> Result<ThresholdFit> {
    if !(alert_limit > 0.0) {
        return Err(Error::config(format!(
            "alert limit must be positive, got {alert_limit}"
        )));
    }
    let labels: Vec<bool> = records.iter().map(|r| r.error > alert_limit).collect();
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::data(format!(
            "threshold fit needs errors on both sides of the {alert_limit} m alert limit \
             ({positives} of {} exceed it); widen the evaluation set",
            labels.len()
        )));
    }
    let n = records.len() as f64;
    let mean = records.iter().map(|r| r.uncertainty).sum::<f64>() / n;
    let sd = (records.iter().map(|r| (r.uncertainty - mean).powi(2)).sum::<f64>() / n).sqrt();

    let logistic = (sd > 0.0)
        .then(|| {
            let u: Vec<f64> = records.iter().map(|r| (r.uncertainty - mean) / sd).collect();
            newton(&u, &labels)
        })
        .flatten();
    if let Some(fit) = &logistic {
        let gamma = mean + sd * (-fit.intercept / fit.slope);
        if fit.slope > 0.0 && gamma.is_finite() && gamma > 0.0 {
            let z = fit.slope / fit.slope_se;
            let reliable = z.abs() >= 2.0;
            if !reliable {
                warn!("uncertainty threshold is unreliable: slope z-statistic {z:.2}");
            }
            return Ok(ThresholdFit {
                gamma,
                method: ThresholdMethod::Logistic,
                intercept: Some(fit.intercept),
                slope: Some(fit.slope),
                z: Some(z),
                reliable,
            });
        }
    }
    warn!("logistic threshold fit unusable, falling back to balanced-error search");
    let gamma = balanced_threshold(records, alert_limit).max(f64::MIN_POSITIVE);
    Ok(ThresholdFit {
        gamma,
        method: ThresholdMethod::Bisection,
        intercept: logistic.as_ref().map(|f| f.intercept),
        slope: logistic.as_ref().map(|f| f.slope),
        z: None,
        reliable: false,
    })
}
