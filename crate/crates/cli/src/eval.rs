//! Prediction, fusion and metric computation over a dataset's test split.

use std::fs;
use std::path::Path;

use log::{info, warn};
use posfuse_core::channel_sim::{Dataset, ScenarioTag};
use posfuse_core::fusion::{fuse, FusionMethod, SPConfig, UncertainEstimate};
use posfuse_core::hash::sha256_hex;
use posfuse_core::metrics::{
    ause, fit_threshold, integrity_risk, mean_error, sparsification_curves, write_curves_csv, CurveForm, ErrorRecord,
    ErrorSummary, IRConfig, MetricsReport, Provenance, SparsificationCurves, ThresholdFit,
};
use posfuse_core::training::{predict_dataset, ModelBundle, TrainMode};
use posfuse_core::{AnchorId, Error, Result, VERSION};
use serde::{Deserialize, Serialize};

/// Method label used for the single estimate of an early-fusion bundle.
pub const EARLY_METHOD: &str = "early";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub fusion: Vec<FusionMethod>,
    /// Monte-Carlo dropout passes per prediction.
    pub passes: usize,
    pub lambda: f64,
    /// Alert limit in meters.
    pub alert_limit: f64,
    pub curve_form: CurveForm,
    /// Seed of the dropout masks used at prediction time.
    pub seed: u64,
    /// Fit the warning threshold and report integrity risk.
    pub integrity: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            fusion: FusionMethod::ALL.to_vec(),
            passes: 30,
            lambda: SPConfig::default().lambda,
            alert_limit: 1.0,
            curve_form: CurveForm::Printed,
            seed: 0,
            integrity: true,
        }
    }
}

impl EvalSettings {
    pub fn validate(&self) -> Result<()> {
        if self.fusion.is_empty() {
            return Err(Error::Config("at least one fusion method is required".into()));
        }
        if self.passes < 1 {
            return Err(Error::Config("at least one Monte-Carlo pass is required".into()));
        }
        if !(self.alert_limit > 0.0 && self.alert_limit.is_finite()) {
            return Err(Error::Config(format!(
                "alert limit must be positive, got {}",
                self.alert_limit
            )));
        }
        self.sp().validate()
    }

    pub fn sp(&self) -> SPConfig {
        SPConfig { lambda: self.lambda }
    }

    /// Method labels evaluated for a bundle of the given mode.
    pub fn methods(&self, mode: TrainMode) -> Vec<String> {
        match mode {
            TrainMode::Early => vec![EARLY_METHOD.to_string()],
            _ => self.fusion.iter().map(|m| m.as_str().to_string()).collect(),
        }
    }
}

/// Short label of a scenario tag, e.g. `static` or `dynamic-1-3`.
pub fn scenario_label(tag: ScenarioTag) -> String {
    if tag.is_static() {
        return "static".to_string();
    }
    let ids: Vec<String> = tag.changed_anchors().iter().map(|a| a.to_string()).collect();
    format!("dynamic-{}", ids.join("-"))
}

#[derive(Debug, Clone)]
pub struct MethodResult {
    pub report: MetricsReport,
    pub curves: SparsificationCurves,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub scenario: String,
    /// Error of each anchor's own estimate; empty for early fusion.
    pub per_anchor: Vec<(AnchorId, ErrorSummary)>,
    pub methods: Vec<MethodResult>,
}

impl EvalOutcome {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.report.method == name)
    }
}

/// How the warning threshold is obtained when integrity is requested.
pub enum ThresholdSource<'a> {
    /// Fit on this static dataset's test predictions.
    StaticReference(&'a Dataset),
    /// Reuse thresholds already fitted per method.
    Fitted(&'a [(String, ThresholdFit)]),
}

fn estimate_for(method: &str, estimates: &[UncertainEstimate], sp: &SPConfig) -> Result<UncertainEstimate> {
    if method == EARLY_METHOD {
        return Ok(estimates[0]);
    }
    let m: FusionMethod = method.parse()?;
    let f = fuse(m, estimates, sp)?;
    Ok(UncertainEstimate::new(AnchorId::JOINT, f.position, f.variance))
}

fn records(
    dataset: &Dataset,
    preds: &[Vec<UncertainEstimate>],
    pick: impl Fn(&[UncertainEstimate]) -> Result<UncertainEstimate>,
) -> Result<Vec<ErrorRecord>> {
    dataset
        .splits
        .test
        .iter()
        .zip(preds)
        .map(|(&i, p)| {
            let truth = dataset.samples[i as usize].position;
            let e = pick(p)?;
            Ok(ErrorRecord::from_estimate([truth.x, truth.y], e.position, e.variance))
        })
        .collect()
}

fn predict_test(
    bundle: &ModelBundle,
    dataset: &Dataset,
    settings: &EvalSettings,
) -> Result<Vec<Vec<UncertainEstimate>>> {
    if dataset.splits.test.is_empty() {
        return Err(Error::Data("dataset has an empty test split".into()));
    }
    predict_dataset(bundle, dataset, &dataset.splits.test, settings.passes, settings.seed)
}

/// Fits one warning threshold per method on a static dataset.
pub fn fit_thresholds(
    bundle: &ModelBundle,
    static_ref: &Dataset,
    settings: &EvalSettings,
) -> Result<Vec<(String, ThresholdFit)>> {
    if !static_ref.test_scenario().is_static() {
        return Err(Error::Config(
            "the static reference dataset has a dynamic test split".into(),
        ));
    }
    let preds = predict_test(bundle, static_ref, settings)?;
    fit_thresholds_from(bundle.mode, static_ref, &preds, settings)
}

fn fit_thresholds_from(
    mode: TrainMode,
    dataset: &Dataset,
    preds: &[Vec<UncertainEstimate>],
    settings: &EvalSettings,
) -> Result<Vec<(String, ThresholdFit)>> {
    let sp = settings.sp();
    settings
        .methods(mode)
        .into_iter()
        .map(|m| {
            let recs = records(dataset, preds, |e| estimate_for(&m, e, &sp))?;
            let fit = fit_threshold(&recs, settings.alert_limit)?;
            if !fit.reliable {
                warn!("threshold for {m} is unreliable (method {:?})", fit.method);
            }
            Ok((m, fit))
        })
        .collect()
}

/// Hash of the evaluation settings together with the evaluated bundle.
pub fn config_hash(bundle: &ModelBundle, settings: &EvalSettings) -> String {
    let canonical = serde_json::to_string(&(bundle.content_hash(), settings)).expect("settings serialize");
    sha256_hex(canonical.as_bytes())
}

/// Evaluates `bundle` on the test split of `dataset`.
///
/// With integrity enabled, thresholds come from `thresholds`; when it is
/// `None` and the dataset itself is static, they are fitted on the dataset.
pub fn evaluate(
    bundle: &ModelBundle,
    dataset: &Dataset,
    thresholds: Option<ThresholdSource<'_>>,
    settings: &EvalSettings,
) -> Result<EvalOutcome> {
    settings.validate()?;
    let tag = dataset.test_scenario();
    let scenario = scenario_label(tag);
    let preds = predict_test(bundle, dataset, settings)?;
    info!("predicted {} test samples for {scenario}", preds.len());

    let fits: Option<Vec<(String, ThresholdFit)>> = if !settings.integrity {
        None
    } else {
        Some(match thresholds {
            Some(ThresholdSource::Fitted(f)) => f.to_vec(),
            Some(ThresholdSource::StaticReference(r)) => fit_thresholds(bundle, r, settings)?,
            None if tag.is_static() => fit_thresholds_from(bundle.mode, dataset, &preds, settings)?,
            None => {
                return Err(Error::Config(format!(
                    "integrity risk on {scenario} needs a static reference dataset to fit the threshold"
                )))
            }
        })
    };

    let per_anchor = if bundle.mode == TrainMode::Early {
        Vec::new()
    } else {
        (0..bundle.anchors)
            .map(|a| {
                let recs = records(dataset, &preds, |e| Ok(e[a]))?;
                Ok((AnchorId::from_index(a), mean_error(&recs)?))
            })
            .collect::<Result<Vec<_>>>()?
    };

    let provenance = Provenance {
        config_hash: config_hash(bundle, settings),
        seed: settings.seed,
        dataset_hash: dataset.content_hash(),
        version: VERSION.to_string(),
        lambda: settings.lambda,
        mc_passes: settings.passes,
        alert_limit: settings.alert_limit,
    };
    let sp = settings.sp();
    let methods = settings
        .methods(bundle.mode)
        .into_iter()
        .map(|m| {
            let recs = records(dataset, &preds, |e| estimate_for(&m, e, &sp))?;
            let curves = sparsification_curves(&recs, settings.curve_form)?;
            let threshold = match &fits {
                Some(f) => Some(
                    f.iter()
                        .find(|(name, _)| *name == m)
                        .map(|(_, fit)| *fit)
                        .ok_or_else(|| Error::Config(format!("no threshold fitted for {m}")))?,
                ),
                None => None,
            };
            let integrity_risk = threshold
                .map(|t| {
                    integrity_risk(
                        &recs,
                        &IRConfig {
                            alert_limit: settings.alert_limit,
                            gamma: t.gamma,
                        },
                    )
                })
                .transpose()?;
            let report = MetricsReport {
                scenario: scenario.clone(),
                changed_anchors: tag.changed_anchors(),
                method: m,
                n_test: recs.len(),
                mean_error: mean_error(&recs)?,
                curve_form: settings.curve_form,
                ause: ause(&recs, settings.curve_form)?,
                alert_limit: settings.alert_limit,
                threshold,
                integrity_risk,
                provenance: provenance.clone(),
            };
            Ok(MethodResult { report, curves })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(EvalOutcome {
        scenario,
        per_anchor,
        methods,
    })
}

/// Writes `report-<scenario>-<method>.json`, `curves-<scenario>-<method>.csv`
/// and, for late fusion, `anchors-<scenario>.csv` into `dir`.
pub fn write_outcome(dir: &Path, outcome: &EvalOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    for m in &outcome.methods {
        let stem = format!("{}-{}", outcome.scenario, m.report.method);
        let mut json = serde_json::to_string_pretty(&m.report)?;
        json.push('\n');
        fs::write(dir.join(format!("report-{stem}.json")), json)?;
        write_curves_csv(&m.curves, fs::File::create(dir.join(format!("curves-{stem}.csv")))?)?;
    }
    if !outcome.per_anchor.is_empty() {
        let file = fs::File::create(dir.join(format!("anchors-{}.csv", outcome.scenario)))?;
        let mut w = csv::Writer::from_writer(file);
        let io = |e: csv::Error| Error::Io(e.into());
        w.write_record(["anchor", "mean", "p50", "p90", "p95", "p99"])
            .map_err(io)?;
        for (a, s) in &outcome.per_anchor {
            w.write_record([
                a.to_string(),
                s.mean.to_string(),
                s.p50.to_string(),
                s.p90.to_string(),
                s.p95.to_string(),
                s.p99.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(scenario_label(ScenarioTag::STATIC), "static");
        let tag = ScenarioTag::from_anchors(&[AnchorId(3), AnchorId(1)]).unwrap();
        assert_eq!(scenario_label(tag), "dynamic-1-3");
    }

    #[test]
    fn early_has_single_method() {
        let s = EvalSettings::default();
        assert_eq!(s.methods(TrainMode::Early), vec!["early"]);
        assert_eq!(s.methods(TrainMode::Mtl), vec!["avg", "ivw", "sp"]);
    }

    #[test]
    fn settings_validation() {
        assert!(EvalSettings::default().validate().is_ok());
        let bad = [
            EvalSettings {
                fusion: vec![],
                ..Default::default()
            },
            EvalSettings {
                passes: 0,
                ..Default::default()
            },
            EvalSettings {
                lambda: 0.0,
                ..Default::default()
            },
            EvalSettings {
                alert_limit: -1.0,
                ..Default::default()
            },
        ];
        for s in bad {
            assert!(matches!(s.validate(), Err(Error::Config(_))), "{s:?}");
        }
    }

    #[test]
    fn early_method_passes_estimate_through() {
        let e = UncertainEstimate::new(AnchorId::JOINT, [1.0, 2.0], [0.5, 0.25]);
        let out = estimate_for(EARLY_METHOD, &[e], &SPConfig::default()).unwrap();
        assert_eq!(out, e);
    }
}
