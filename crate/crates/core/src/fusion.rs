//! Combining per-anchor position estimates.
//!
//! Coordinates are treated independently (diagonal covariance). The
//! spurious-robust adjustment inflates an anchor's variance by
//! `B / (B - D)` with `D = prod (x_n - x_l)^2` and
//! `B = prod (|x_n - x_l| + lambda)^2` over the other anchors `l`, which is
//! evaluated as `1 / (1 - D/B)` in the log domain.

use serde::{Deserialize, Serialize};

use crate::{AnchorId, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertainEstimate {
    pub anchor: AnchorId,
    /// `[x, y]` in meters.
    pub position: [f64; 2],
    /// Per-coordinate variances in m^2.
    pub variance: [f64; 2],
}

impl UncertainEstimate {
    pub fn new(anchor: AnchorId, position: [f64; 2], variance: [f64; 2]) -> Self {
        Self {
            anchor,
            position,
            variance,
        }
    }

    /// Euclidean norm of the per-coordinate standard deviations.
    pub fn uncertainty_norm(&self) -> f64 {
        (self.variance[0] + self.variance[1]).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMethod {
    Avg,
    Ivw,
    Sp,
}

impl FusionMethod {
    pub const ALL: [FusionMethod; 3] = [FusionMethod::Avg, FusionMethod::Ivw, FusionMethod::Sp];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMethod::Avg => "avg",
            FusionMethod::Ivw => "ivw",
            FusionMethod::Sp => "sp",
        }
    }
}

impl std::str::FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(FusionMethod::Avg),
            "ivw" => Ok(FusionMethod::Ivw),
            "sp" => Ok(FusionMethod::Sp),
            other => Err(Error::config(format!(
                "unknown fusion method '{other}' (expected avg, ivw or sp)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SPConfig {
    /// Disagreement scale in meters.
    pub lambda: f64,
}

impl Default for SPConfig {
    fn default() -> Self {
        Self { lambda: 0.01 }
    }
}

impl SPConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda > 0.0 && self.lambda.is_finite() {
            Ok(())
        } else {
            Err(Error::config(format!("lambda must be positive, got {}", self.lambda)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusedEstimate {
    pub position: [f64; 2],
    pub variance: [f64; 2],
    pub method: FusionMethod,
}

fn check(estimates: &[UncertainEstimate]) -> Result<()> {
    if estimates.is_empty() {
        return Err(Error::domain("cannot fuse an empty set of estimates"));
    }
    for e in estimates {
        if !e.position.iter().all(|v| v.is_finite()) {
            return Err(Error::domain(format!("anchor {} has a non-finite position", e.anchor)));
        }
        if !e.variance.iter().all(|&v| v > 0.0 && !v.is_nan()) {
            return Err(Error::domain(format!(
                "anchor {} has a non-positive variance {:?}",
                e.anchor, e.variance
            )));
        }
    }
    Ok(())
}

fn ivw(estimates: &[UncertainEstimate], method: FusionMethod) -> FusedEstimate {
    let mut position = [0.0; 2];
    let mut variance = [0.0; 2];
    for c in 0..2 {
        let precision: f64 = estimates.iter().map(|e| 1.0 / e.variance[c]).sum();
        let weighted: f64 = estimates.iter().map(|e| e.position[c] / e.variance[c]).sum();
        variance[c] = 1.0 / precision;
        position[c] = variance[c] * weighted;
    }
    FusedEstimate {
        position,
        variance,
        method,
    }
}

/// Inverse-variance weighting.
pub fn fuse_ivw(estimates: &[UncertainEstimate]) -> Result<FusedEstimate> {
    check(estimates)?;
    Ok(ivw(estimates, FusionMethod::Ivw))
}

/// Plain mean; equivalent to inverse-variance weighting with unit variances.
pub fn fuse_average(estimates: &[UncertainEstimate]) -> Result<FusedEstimate> {
    if estimates.is_empty() {
        return Err(Error::domain("cannot fuse an empty set of estimates"));
    }
    let unit: Vec<UncertainEstimate> = estimates
        .iter()
        .map(|e| UncertainEstimate {
            variance: [1.0, 1.0],
            ..*e
        })
        .collect();
    check(&unit)?;
    Ok(ivw(&unit, FusionMethod::Avg))
}

/// Inflates each anchor's variance according to its disagreement with the
/// other anchors. Agreement leaves the variance untouched; unbounded
/// disagreement drives it to infinity (capped at `f64::MAX`).
pub fn sp_adjust(estimates: &[UncertainEstimate], cfg: &SPConfig) -> Result<Vec<UncertainEstimate>> {
    cfg.validate()?;
    check(estimates)?;
    if estimates.len() < 2 {
        return Err(Error::domain("spurious-robust fusion needs at least two estimates"));
    }
    Ok(estimates
        .iter()
        .enumerate()
        .map(|(n, e)| {
            let mut variance = e.variance;
            for (c, var) in variance.iter_mut().enumerate() {
                // ln(D / B) = -2 sum ln(1 + lambda / |delta|); any zero delta makes D = 0.
                let mut log_ratio = 0.0;
                let mut agrees = false;
                for (l, other) in estimates.iter().enumerate() {
                    if l == n {
                        continue;
                    }
                    let delta = (e.position[c] - other.position[c]).abs();
                    if delta == 0.0 {
                        agrees = true;
                        break;
                    }
                    log_ratio -= 2.0 * (cfg.lambda / delta).ln_1p();
                }
                if !agrees {
                    let one_minus_ratio = -log_ratio.exp_m1();
                    *var = (*var / one_minus_ratio).min(f64::MAX);
                }
            }
            UncertainEstimate { variance, ..*e }
        })
        .collect())
}

/// Spurious-robust adjustment followed by inverse-variance weighting.
pub fn fuse_sp(estimates: &[UncertainEstimate], cfg: &SPConfig) -> Result<FusedEstimate> {
    let adjusted = sp_adjust(estimates, cfg)?;
    Ok(ivw(&adjusted, FusionMethod::Sp))
}

pub fn fuse(method: FusionMethod, estimates: &[UncertainEstimate], cfg: &SPConfig) -> Result<FusedEstimate> {
    match method {
        FusionMethod::Avg => fuse_average(estimates),
        FusionMethod::Ivw => fuse_ivw(estimates),
        FusionMethod::Sp => fuse_sp(estimates, cfg),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn est(n: usize, x: f64, y: f64, vx: f64, vy: f64) -> UncertainEstimate {
        UncertainEstimate::new(AnchorId::from_index(n), [x, y], [vx, vy])
    }

    fn xs(points: &[(f64, f64)]) -> Vec<UncertainEstimate> {
        points
            .iter()
            .enumerate()
            .map(|(n, &(x, v))| est(n, x, 0.0, v, v))
            .collect()
    }

    #[test]
    fn average_of_single_estimate_is_itself() {
        let f = fuse_average(&[est(0, 1.5, -2.0, 3.0, 4.0)]).unwrap();
        assert_eq!(f.position, [1.5, -2.0]);
        assert_eq!(f.variance, [1.0, 1.0]);
        assert_eq!(f.method, FusionMethod::Avg);
    }

    #[test]
    fn average_is_midpoint_and_unit_ivw() {
        let f = fuse_average(&xs(&[(0.0, 5.0), (2.0, 0.1)])).unwrap();
        assert_eq!(f.position[0], 1.0);
        assert_eq!(f.variance[0], 0.5);
        let e = vec![
            est(0, 0.3, 1.0, 2.0, 9.0),
            est(1, 4.0, 2.0, 0.1, 0.2),
            est(2, -1.0, 5.0, 1.0, 1.0),
            est(3, 2.2, 0.0, 3.0, 3.0),
        ];
        let unit: Vec<_> = e
            .iter()
            .map(|x| UncertainEstimate {
                variance: [1.0, 1.0],
                ..*x
            })
            .collect();
        let a = fuse_average(&e).unwrap();
        let b = fuse_ivw(&unit).unwrap();
        assert_eq!(a.position, b.position);
        assert_eq!(a.variance, [0.25, 0.25]);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(fuse_average(&[]), Err(Error::Domain(_))));
        assert!(matches!(fuse_ivw(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn ivw_hand_cases() {
        let f = fuse_ivw(&xs(&[(0.0, 0.7), (2.0, 0.7)])).unwrap();
        assert!((f.position[0] - 1.0).abs() < 1e-15);
        assert!((f.variance[0] - 0.35).abs() < 1e-15);

        let f = fuse_ivw(&xs(&[(0.0, 1.0), (3.0, 2.0)])).unwrap();
        assert!((f.variance[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((f.position[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ivw_ignores_huge_variance() {
        let base = xs(&[(0.0, 1.0), (3.0, 2.0), (1.0, 0.5)]);
        let mut with = base.clone();
        with.push(est(3, 100.0, 100.0, 1e12, 1e12));
        let a = fuse_ivw(&base).unwrap();
        let b = fuse_ivw(&with).unwrap();
        for c in 0..2 {
            assert!((a.position[c] - b.position[c]).abs() < 1e-6);
        }
    }

    #[test]
    fn ivw_rejects_non_positive_variance() {
        assert!(fuse_ivw(&xs(&[(0.0, 1.0), (1.0, 0.0)])).is_err());
        assert!(fuse_ivw(&xs(&[(0.0, -1.0)])).is_err());
    }

    #[test]
    fn sp_identical_estimates_unchanged() {
        let e = xs(&[(2.0, 0.3), (2.0, 0.6), (2.0, 1.1)]);
        let adj = sp_adjust(&e, &SPConfig::default()).unwrap();
        assert_eq!(adj, e);
        let a = fuse_sp(&e, &SPConfig::default()).unwrap();
        let b = fuse_ivw(&e).unwrap();
        assert_eq!(a.position, b.position);
        assert_eq!(a.variance, b.variance);
    }

    #[test]
    fn sp_two_anchor_hand_case() {
        let e = xs(&[(0.0, 1.0), (1.0, 1.0)]);
        let adj = sp_adjust(&e, &SPConfig { lambda: 0.01 }).unwrap();
        let expected = 1.0201 / 0.0201;
        for a in &adj {
            assert!((a.variance[0] - expected).abs() <= 1e-9);
        }
        let f = fuse_sp(&e, &SPConfig::default()).unwrap();
        assert!((f.position[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sp_diverges_with_disagreement() {
        let mut last = 0.0;
        for d in [1.0, 10.0, 1e3, 1e6, 1e9] {
            let adj = sp_adjust(&xs(&[(0.0, 1.0), (d, 1.0)]), &SPConfig::default()).unwrap();
            assert!(adj[0].variance[0] > last);
            last = adj[0].variance[0];
        }
        assert!(last > 1e10);
    }

    #[test]
    fn sp_pulls_towards_agreeing_cluster() {
        let e = vec![
            est(0, 5.0, 5.0, 0.2, 0.2),
            est(1, 5.1, 4.9, 0.2, 0.2),
            est(2, 4.95, 5.05, 0.2, 0.2),
            est(3, 9.0, 1.0, 0.01, 0.01),
        ];
        let cluster = [(5.0 + 5.1 + 4.95) / 3.0, (5.0 + 4.9 + 5.05) / 3.0];
        let dist =
            |f: FusedEstimate| ((f.position[0] - cluster[0]).powi(2) + (f.position[1] - cluster[1]).powi(2)).sqrt();
        let sp = dist(fuse_sp(&e, &SPConfig::default()).unwrap());
        let iv = dist(fuse_ivw(&e).unwrap());
        assert!(sp < iv, "sp {sp} ivw {iv}");
    }

    #[test]
    fn sp_needs_two_estimates_and_positive_lambda() {
        assert!(sp_adjust(&xs(&[(0.0, 1.0)]), &SPConfig::default()).is_err());
        assert!(sp_adjust(&xs(&[(0.0, 1.0), (1.0, 1.0)]), &SPConfig { lambda: 0.0 }).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in FusionMethod::ALL {
            assert_eq!(m.as_str().parse::<FusionMethod>().unwrap(), m);
        }
        assert!("mcd".parse::<FusionMethod>().is_err());
    }

    fn estimates_strategy() -> impl Strategy<Value = Vec<UncertainEstimate>> {
        prop::collection::vec((-20.0f64..20.0, -20.0f64..20.0, 1e-4f64..10.0, 1e-4f64..10.0), 2..7).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(n, (x, y, vx, vy))| est(n, x, y, vx, vy))
                .collect()
        })
    }

    fn lo_hi(e: &[UncertainEstimate], c: usize) -> (f64, f64) {
        e.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x.position[c]), hi.max(x.position[c]))
        })
    }

    proptest! {
        #[test]
        fn ivw_variance_not_above_any_input(e in estimates_strategy()) {
            let f = fuse_ivw(&e).unwrap();
            for c in 0..2 {
                prop_assert!(e.iter().all(|x| f.variance[c] <= x.variance[c]));
            }
        }

        #[test]
        fn fused_means_are_convex_combinations(e in estimates_strategy(), lambda in 1e-3f64..1.0) {
            let cfg = SPConfig { lambda };
            for f in [fuse_ivw(&e).unwrap(), fuse_average(&e).unwrap(), fuse_sp(&e, &cfg).unwrap()] {
                for c in 0..2 {
                    let (lo, hi) = lo_hi(&e, c);
                    let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
                    prop_assert!(f.position[c] >= lo - tol && f.position[c] <= hi + tol);
                }
            }
        }

        #[test]
        fn sp_only_inflates(e in estimates_strategy(), lambda in 1e-3f64..1.0) {
            let adj = sp_adjust(&e, &SPConfig { lambda }).unwrap();
            for (a, b) in adj.iter().zip(&e) {
                for c in 0..2 {
                    prop_assert!(a.variance[c] > 0.0);
                    prop_assert!(a.variance[c] >= b.variance[c]);
                }
            }
        }

        #[test]
        fn sp_translation_invariant(e in estimates_strategy(), shift in -50.0f64..50.0) {
            // Shifts by a power of two are exact in floating point.
            let shift = (shift * 4.0).round() / 4.0;
            let moved: Vec<_> = e.iter().map(|x| UncertainEstimate { position: [x.position[0] + shift, x.position[1] + shift], ..*x }).collect();
            let cfg = SPConfig::default();
            let a = sp_adjust(&e, &cfg).unwrap();
            let b = sp_adjust(&moved, &cfg).unwrap();
            for (p, q) in a.iter().zip(&b) {
                for c in 0..2 {
                    prop_assert!((p.variance[c] - q.variance[c]).abs() <= 1e-6 * p.variance[c]);
                }
            }
            let fa = fuse_sp(&e, &cfg).unwrap();
            let fb = fuse_sp(&moved, &cfg).unwrap();
            for c in 0..2 {
                prop_assert!((fa.position[c] + shift - fb.position[c]).abs() <= 1e-6 * (1.0 + shift.abs()));
            }
        }

        #[test]
        fn order_does_not_matter(e in estimates_strategy(), rot in 0usize..7) {
            let mut shuffled = e.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            let cfg = SPConfig::default();
            for m in FusionMethod::ALL {
                let a = fuse(m, &e, &cfg).unwrap();
                let b = fuse(m, &shuffled, &cfg).unwrap();
                for c in 0..2 {
                    prop_assert!((a.position[c] - b.position[c]).abs() <= 1e-9 * (1.0 + a.position[c].abs()));
                    prop_assert!((a.variance[c] - b.variance[c]).abs() <= 1e-9 * a.variance[c]);
                }
            }
        }
    }
}
