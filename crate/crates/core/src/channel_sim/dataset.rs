use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::env::{Environment, Point2};
use super::fingerprint::{compute_norm_stats, to_fingerprint, Fingerprint, NormStats};
use super::synth::synth_channel;
use super::transform::attenuate_strongest;
use crate::{rng, AnchorId, Error, Result};

/// Per-sample scenario marker: bitmask of anchors whose channel was altered
/// (bit `n - 1` for anchor `n`), zero for static samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScenarioTag(pub u8);

impl ScenarioTag {
    pub const STATIC: ScenarioTag = ScenarioTag(0);

    pub fn from_anchors(anchors: &[AnchorId]) -> Result<Self> {
        let mut mask = 0u8;
        for a in anchors {
            match a.0 {
                1..=8 => mask |= 1 << (a.0 - 1),
                _ => {
                    return Err(Error::config(format!(
                        "scenario tags can only mark anchors 1..=8, got {a}"
                    )))
                }
            }
        }
        Ok(ScenarioTag(mask))
    }

    pub fn is_static(self) -> bool {
        self.0 == 0
    }

    pub fn changed_anchors(self) -> Vec<AnchorId> {
        (0..8)
            .filter(|b| self.0 & (1 << b) != 0)
            .map(|b| AnchorId(b + 1))
            .collect()
    }
}

/// Deployment-phase condition of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSpec {
    Static,
    /// Strongest path of each listed anchor attenuated in the test split.
    Dynamic {
        anchors: Vec<AnchorId>,
        #[serde(default = "default_atten_db")]
        atten_db: f64,
        #[serde(default = "default_window")]
        window: usize,
    },
}

fn default_atten_db() -> f64 {
    20.0
}

fn default_window() -> usize {
    3
}

impl ScenarioSpec {
    pub fn dynamic(anchors: Vec<AnchorId>) -> Self {
        ScenarioSpec::Dynamic {
            anchors,
            atten_db: default_atten_db(),
            window: default_window(),
        }
    }

    /// Short label, e.g. `static` or `dynamic-1-3`.
    pub fn label(&self) -> String {
        match self {
            ScenarioSpec::Static => "static".to_string(),
            ScenarioSpec::Dynamic { anchors, .. } => {
                let ids: BTreeSet<_> = anchors.iter().map(|a| a.0).collect();
                let ids: Vec<String> = ids.iter().map(|a| a.to_string()).collect();
                format!("dynamic-{}", ids.join("-"))
            }
        }
    }

    pub fn changed_anchors(&self) -> &[AnchorId] {
        match self {
            ScenarioSpec::Static => &[],
            ScenarioSpec::Dynamic { anchors, .. } => anchors,
        }
    }

    pub fn validate(&self, anchor_count: usize) -> Result<()> {
        if let ScenarioSpec::Dynamic {
            anchors,
            atten_db,
            window,
        } = self
        {
            for a in anchors {
                if a.index().is_none_or(|i| i >= anchor_count) {
                    return Err(Error::config(format!(
                        "scenario names anchor id {a}, environment has anchors 1..={anchor_count}"
                    )));
                }
            }
            if !(*atten_db > 0.0) || *window == 0 || window.is_multiple_of(2) {
                return Err(Error::config("attenuation must be positive and window odd"));
            }
            ScenarioTag::from_anchors(anchors)?;
        }
        Ok(())
    }
}

/// How the generated samples are divided. The first `n_samples` samples form
/// the training pool, of which `val_fraction` becomes validation; `n_test`
/// further samples form the test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub val_fraction: f64,
    pub n_test: usize,
}

impl SplitSpec {
    /// Validation count carved out of a pool of `n_samples`.
    pub fn validation_count(&self, n_samples: usize) -> usize {
        (n_samples as f64 * self.val_fraction).round() as usize
    }

    /// Smallest pool size whose training split holds exactly `n_train`
    /// samples, if one exists.
    pub fn pool_for_train(&self, n_train: usize) -> Option<usize> {
        if !(0.0..1.0).contains(&self.val_fraction) {
            return None;
        }
        // The training count is nondecreasing in the pool size.
        (n_train..)
            .find(|&n| n - self.validation_count(n) >= n_train)
            .filter(|&n| n - self.validation_count(n) == n_train)
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            val_fraction: 0.1,
            n_test: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<u32>,
    pub validation: Vec<u32>,
    pub test: Vec<u32>,
}

impl Splits {
    fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.validation).chain(&self.test) {
            let slot = seen
                .get_mut(i as usize)
                .ok_or_else(|| Error::data(format!("split index {i} out of range")))?;
            if *slot {
                return Err(Error::data(format!("sample {i} appears in more than one split")));
            }
            *slot = true;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub position: Point2,
    pub fingerprints: Vec<Fingerprint>,
    pub scenario: ScenarioTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub anchors: usize,
    pub antennas: usize,
    pub subcarriers: usize,
    pub samples: Vec<Sample>,
    pub splits: Splits,
    pub env_hash: u64,
}

impl Dataset {
    /// Length of one anchor's flattened fingerprint.
    pub fn fingerprint_len(&self) -> usize {
        self.antennas * self.subcarriers * 2
    }

    /// Checks shapes, value ranges and split consistency.
    pub fn validate(&self) -> Result<()> {
        if self.anchors == 0 || self.antennas == 0 || self.subcarriers == 0 {
            return Err(Error::data("dataset dimensions must be positive"));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.fingerprints.len() != self.anchors {
                return Err(Error::data(format!(
                    "sample {i} has {} fingerprints, expected {}",
                    s.fingerprints.len(),
                    self.anchors
                )));
            }
            if !(s.position.x.is_finite() && s.position.y.is_finite()) {
                return Err(Error::data(format!("sample {i} has a non-finite position")));
            }
            for (a, fp) in s.fingerprints.iter().enumerate() {
                if fp.antennas != self.antennas
                    || fp.subcarriers != self.subcarriers
                    || fp.values.len() != self.fingerprint_len()
                    || fp.anchor != AnchorId::from_index(a)
                {
                    return Err(Error::data(format!("sample {i} anchor {} has wrong shape", a + 1)));
                }
                if fp.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::data(format!(
                        "sample {i} anchor {} has values outside [0, 1]",
                        a + 1
                    )));
                }
            }
        }
        self.splits.validate(self.samples.len())
    }

    pub fn train(&self) -> impl Iterator<Item = &Sample> {
        self.splits.train.iter().map(|&i| &self.samples[i as usize])
    }

    pub fn test(&self) -> impl Iterator<Item = &Sample> {
        self.splits.test.iter().map(|&i| &self.samples[i as usize])
    }

    /// Union of the scenario tags of the test split.
    pub fn test_scenario(&self) -> ScenarioTag {
        ScenarioTag(self.test().fold(0, |acc, s| acc | s.scenario.0))
    }
}

fn ue_position(env: &Environment, index: usize) -> Point2 {
    let mut r = rng::keyed(env.seed, &[rng::domain::UE_POSITION, index as u64]);
    let b = env.bounds;
    Point2::new(r.random_range(b.min.x..=b.max.x), r.random_range(b.min.y..=b.max.y))
}

/// Generates `n_samples` training-pool samples plus `split.n_test` test
/// samples. Normalization uses training-split extrema; in a dynamic scenario
/// only the test-split fingerprints of the listed anchors are altered.
pub fn gen_dataset(env: &Environment, n_samples: usize, scenario: &ScenarioSpec, split: &SplitSpec) -> Result<Dataset> {
    gen_dataset_with_stats(env, n_samples, scenario, split).map(|(d, _)| d)
}

/// [`gen_dataset`] that also returns the per-anchor normalization stats.
pub fn gen_dataset_with_stats(
    env: &Environment,
    n_samples: usize,
    scenario: &ScenarioSpec,
    split: &SplitSpec,
) -> Result<(Dataset, Vec<NormStats>)> {
    env.validate()?;
    scenario.validate(env.anchors.len())?;
    if n_samples < 10 {
        return Err(Error::config(format!("need at least 10 samples, got {n_samples}")));
    }
    if !(0.0..1.0).contains(&split.val_fraction) {
        return Err(Error::config("validation fraction must lie in [0, 1)"));
    }
    let n_val = split.validation_count(n_samples);
    let n_train = n_samples - n_val;
    let total = n_samples + split.n_test;
    let n_anchors = env.anchors.len();

    let positions: Vec<Point2> = (0..total).map(|i| ue_position(env, i)).collect();

    let stats = (0..n_anchors)
        .map(|a| {
            let csis = positions[..n_train]
                .par_iter()
                .map(|&p| synth_channel(env, a, p))
                .collect::<Result<Vec<_>>>()?;
            compute_norm_stats(&csis)
        })
        .collect::<Result<Vec<_>>>()?;

    let (changed, atten_db, window) = match scenario {
        ScenarioSpec::Static => (Vec::new(), 0.0, 1),
        ScenarioSpec::Dynamic {
            anchors,
            atten_db,
            window,
        } => (anchors.clone(), *atten_db, *window),
    };
    let test_tag = ScenarioTag::from_anchors(&changed)?;

    let samples = positions
        .par_iter()
        .enumerate()
        .map(|(i, &position)| {
            let in_test = i >= n_samples;
            let fingerprints = (0..n_anchors)
                .map(|a| {
                    let mut csi = synth_channel(env, a, position)?;
                    if in_test && changed.contains(&AnchorId::from_index(a)) {
                        csi = attenuate_strongest(&csi, atten_db, window)?;
                    }
                    let mut fp = to_fingerprint(&csi, &stats[a])?;
                    // Stored as f32 on disk; keep memory and file identical.
                    fp.values.iter_mut().for_each(|v| *v = *v as f32 as f64);
                    Ok(fp)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Sample {
                position,
                fingerprints,
                scenario: if in_test { test_tag } else { ScenarioTag::STATIC },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let idx = |r: std::ops::Range<usize>| r.map(|i| i as u32).collect::<Vec<_>>();
    let dataset = Dataset {
        anchors: n_anchors,
        antennas: env.antennas(),
        subcarriers: env.subcarriers,
        samples,
        splits: Splits {
            train: idx(0..n_train),
            validation: idx(n_train..n_samples),
            test: idx(n_samples..total),
        },
        env_hash: env.descriptor_hash(),
    };
    Ok((dataset, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_for_train_hits_exact_counts() {
        for f in [0.0, 0.1, 0.15, 0.2, 0.33] {
            let split = SplitSpec {
                val_fraction: f,
                n_test: 0,
            };
            for n_train in [9, 10, 90, 1000, 4999, 5000] {
                let pool = split.pool_for_train(n_train).unwrap();
                assert_eq!(pool - split.validation_count(pool), n_train, "f={f} n={n_train}");
                if pool > 0 {
                    let smaller = pool - 1;
                    assert_ne!(smaller - split.validation_count(smaller), n_train);
                }
            }
        }
        assert_eq!(
            SplitSpec {
                val_fraction: 0.1,
                n_test: 0
            }
            .pool_for_train(5000),
            Some(5556)
        );
    }

    fn small_env() -> Environment {
        let mut env = Environment::desk_default(21);
        env.subcarriers = 16;
        env
    }

    #[test]
    fn split_counts_follow_fractions() {
        let env = small_env();
        let d = gen_dataset(&env, 100, &ScenarioSpec::Static, &SplitSpec::default()).unwrap();
        assert_eq!(d.splits.train.len(), 90);
        assert_eq!(d.splits.validation.len(), 10);
        assert!(d.splits.test.is_empty());

        let split = SplitSpec {
            val_fraction: 0.1,
            n_test: 30,
        };
        let d = gen_dataset(&env, 100, &ScenarioSpec::Static, &split).unwrap();
        assert_eq!(d.samples.len(), 130);
        assert_eq!(d.splits.test.len(), 30);
        d.validate().unwrap();
    }

    #[test]
    fn deterministic_generation() {
        let env = small_env();
        let split = SplitSpec {
            val_fraction: 0.1,
            n_test: 10,
        };
        let s = ScenarioSpec::dynamic(vec![AnchorId(2)]);
        assert_eq!(
            gen_dataset(&env, 40, &s, &split).unwrap(),
            gen_dataset(&env, 40, &s, &split).unwrap()
        );
    }

    #[test]
    fn dynamic_alters_only_test_fingerprints_of_listed_anchor() {
        let env = small_env();
        let split = SplitSpec {
            val_fraction: 0.1,
            n_test: 20,
        };
        let stat = gen_dataset(&env, 50, &ScenarioSpec::Static, &split).unwrap();
        let dyn_a = gen_dataset(&env, 50, &ScenarioSpec::dynamic(vec![AnchorId(1)]), &split).unwrap();

        for &i in stat.splits.train.iter().chain(&stat.splits.validation) {
            assert_eq!(stat.samples[i as usize], dyn_a.samples[i as usize]);
        }
        for &i in &stat.splits.test {
            let (s, d) = (&stat.samples[i as usize], &dyn_a.samples[i as usize]);
            assert_eq!(s.position, d.position);
            assert_ne!(s.fingerprints[0], d.fingerprints[0]);
            for a in 1..4 {
                assert_eq!(s.fingerprints[a], d.fingerprints[a]);
            }
            assert_eq!(d.scenario, ScenarioTag(0b1));
        }
    }

    #[test]
    fn unknown_anchor_is_config_error_naming_it() {
        let env = small_env();
        let err = gen_dataset(
            &env,
            20,
            &ScenarioSpec::dynamic(vec![AnchorId(7)]),
            &SplitSpec::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains('7')), "{err}");
    }

    #[test]
    fn too_few_samples() {
        let env = small_env();
        assert!(gen_dataset(&env, 9, &ScenarioSpec::Static, &SplitSpec::default()).is_err());
    }

    #[test]
    fn positions_inside_bounds_and_values_in_unit_range() {
        let env = small_env();
        let split = SplitSpec {
            val_fraction: 0.1,
            n_test: 30,
        };
        let d = gen_dataset(&env, 60, &ScenarioSpec::dynamic(vec![AnchorId(1), AnchorId(4)]), &split).unwrap();
        for s in &d.samples {
            assert!(env.bounds.contains(s.position));
            for fp in &s.fingerprints {
                assert!(fp.values.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn scenario_labels() {
        assert_eq!(ScenarioSpec::Static.label(), "static");
        assert_eq!(
            ScenarioSpec::dynamic(vec![AnchorId(3), AnchorId(1)]).label(),
            "dynamic-1-3"
        );
        assert_eq!(
            ScenarioTag::from_anchors(&[AnchorId(1), AnchorId(3)])
                .unwrap()
                .changed_anchors(),
            vec![AnchorId(1), AnchorId(3)]
        );
    }
}
