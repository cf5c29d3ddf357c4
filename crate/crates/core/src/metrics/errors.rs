use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One test sample: Euclidean position error and the norm of the
/// per-coordinate standard deviations, both in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub error: f64,
    pub uncertainty: f64,
}

impl ErrorRecord {
    pub fn new(error: f64, uncertainty: f64) -> Self {
        Self { error, uncertainty }
    }

    pub fn from_estimate(truth: [f64; 2], position: [f64; 2], variance: [f64; 2]) -> Self {
        Self {
            error: (position[0] - truth[0]).hypot(position[1] - truth[1]),
            uncertainty: (variance[0] + variance[1]).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
}

/// Linear interpolation between closest ranks on sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn mean_error(records: &[ErrorRecord]) -> Result<ErrorSummary> {
    if records.is_empty() {
        return Err(Error::domain("mean error of an empty record set"));
    }
    let mut errors: Vec<f64> = records.iter().map(|r| r.error).collect();
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    errors.sort_by(f64::total_cmp);
    Ok(ErrorSummary {
        mean,
        p50: percentile(&errors, 0.50),
        p90: percentile(&errors, 0.90),
        p95: percentile(&errors, 0.95),
        p99: percentile(&errors, 0.99),
    })
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::rng;

    fn recs(errors: &[f64]) -> Vec<ErrorRecord> {
        errors.iter().map(|&e| ErrorRecord::new(e, 1.0)).collect()
    }

    #[test]
    fn zero_and_simple_means() {
        assert_eq!(mean_error(&recs(&[0.0, 0.0, 0.0])).unwrap().mean, 0.0);
        assert_eq!(mean_error(&recs(&[1.0, 3.0])).unwrap().mean, 2.0);
        assert!(mean_error(&[]).is_err());
    }

    #[test]
    fn naive_resummation_agrees() {
        let mut r = rng::keyed(3, &[]);
        let errors: Vec<f64> = (0..1000).map(|_| r.random_range(0.0..5.0)).collect();
        let mut naive = 0.0;
        for e in &errors {
            naive += e;
        }
        naive /= 1000.0;
        assert!((mean_error(&recs(&errors)).unwrap().mean - naive).abs() <= 1e-12);
    }

    #[test]
    fn percentiles_interpolate() {
        let errors: Vec<f64> = (0..=100).map(f64::from).collect();
        let s = mean_error(&recs(&errors)).unwrap();
        assert_eq!((s.p50, s.p90, s.p95, s.p99), (50.0, 90.0, 95.0, 99.0));
        let s = mean_error(&recs(&[2.0])).unwrap();
        assert_eq!(s.p99, 2.0);
    }

    #[test]
    fn record_from_estimate() {
        let r = ErrorRecord::from_estimate([0.0, 0.0], [3.0, 4.0], [9.0, 16.0]);
        assert_eq!(r.error, 5.0);
        assert_eq!(r.uncertainty, 5.0);
    }
}
