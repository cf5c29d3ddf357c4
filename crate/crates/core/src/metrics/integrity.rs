use serde::{Deserialize, Serialize};

use super::ErrorRecord;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IRConfig {
    /// Alert limit in meters.
    pub alert_limit: f64,
    /// Warning threshold on the uncertainty norm, meters.
    pub gamma: f64,
}

impl IRConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alert_limit > 0.0) || !(self.gamma > 0.0) {
            return Err(Error::config(format!(
                "alert limit and threshold must be positive (AL {}, gamma {})",
                self.alert_limit, self.gamma
            )));
        }
        Ok(())
    }
}

/// Fraction of records whose error exceeds the alert limit while no
/// warning was raised (uncertainty norm at or below the threshold).
pub fn integrity_risk(records: &[ErrorRecord], cfg: &IRConfig) -> Result<f64> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::domain("integrity risk of an empty record set"));
    }
    let silent_failures = records
        .iter()
        .filter(|r| r.uncertainty <= cfg.gamma && r.error > cfg.alert_limit)
        .count();
    Ok(silent_failures as f64 / records.len() as f64)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn cfg(alert_limit: f64, gamma: f64) -> IRConfig {
        IRConfig { alert_limit, gamma }
    }

    #[test]
    fn all_warned_gives_zero() {
        let recs: Vec<_> = (0..10).map(|i| ErrorRecord::new(5.0, 2.0 + i as f64)).collect();
        assert_eq!(integrity_risk(&recs, &cfg(1.0, 1.5)).unwrap(), 0.0);
    }

    #[test]
    fn one_silent_failure_in_ten() {
        let mut recs: Vec<_> = (0..9).map(|_| ErrorRecord::new(0.5, 0.1)).collect();
        recs.push(ErrorRecord::new(3.0, 0.2));
        assert_eq!(integrity_risk(&recs, &cfg(1.0, 0.5)).unwrap(), 0.1);
    }

    #[test]
    fn small_errors_never_count() {
        let recs: Vec<_> = (0..10).map(|i| ErrorRecord::new(0.99, i as f64 * 0.1)).collect();
        assert_eq!(integrity_risk(&recs, &cfg(1.0, 100.0)).unwrap(), 0.0);
    }

    #[test]
    fn boundary_uncertainty_is_silent() {
        let recs = vec![ErrorRecord::new(2.0, 0.5), ErrorRecord::new(0.0, 0.0)];
        assert_eq!(integrity_risk(&recs, &cfg(1.0, 0.5)).unwrap(), 0.5);
    }

    #[test]
    fn invalid_config_rejected() {
        let recs = vec![ErrorRecord::new(2.0, 0.5)];
        assert!(integrity_risk(&recs, &cfg(0.0, 0.5)).is_err());
        assert!(integrity_risk(&recs, &cfg(1.0, -1.0)).is_err());
        assert!(integrity_risk(&[], &cfg(1.0, 1.0)).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_threshold_and_alert_limit(
            pairs in prop::collection::vec((0.0f64..3.0, 0.0f64..3.0), 1..80),
            gamma in 0.01f64..3.0, shrink in 0.0f64..1.0,
            al in 0.01f64..3.0, grow in 0.0f64..2.0,
        ) {
            let recs: Vec<_> = pairs.iter().map(|&(e, s)| ErrorRecord::new(e, s)).collect();
            let base = integrity_risk(&recs, &cfg(al, gamma)).unwrap();
            let lower_gamma = integrity_risk(&recs, &cfg(al, (gamma * (1.0 - shrink)).max(1e-6))).unwrap();
            let higher_al = integrity_risk(&recs, &cfg(al + grow, gamma)).unwrap();
            prop_assert!(lower_gamma <= base);
            prop_assert!(higher_al <= base);
            prop_assert!((0.0..=1.0).contains(&base));
        }
    }
}
