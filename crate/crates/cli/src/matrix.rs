//! Cross-product experiment runner.
//!
//! A cell is one trained bundle, identified by (mode, loss, training size,
//! seed); it is evaluated on every scenario and every applicable fusion
//! method. Completed cells leave a `cell.json` in `cells/<hash>/` and are
//! skipped on reruns. Cells run one after another; parallelism lives inside
//! training and prediction.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use posfuse_core::channel_sim::{gen_dataset, Dataset, Environment, ScenarioSpec, SplitSpec};
use posfuse_core::fusion::FusionMethod;
use posfuse_core::hash::sha256_hex;
use posfuse_core::metrics::{CurveForm, ThresholdFit};
use posfuse_core::nn::LossKind;
use posfuse_core::training::{train, TrainConfig, TrainMode};
use posfuse_core::{Error, Result, VERSION};
use serde::{Deserialize, Serialize};

use crate::eval::{evaluate, fit_thresholds, write_outcome, EvalSettings, ThresholdSource};

fn default_scenarios() -> Vec<ScenarioSpec> {
    vec![ScenarioSpec::Static]
}

fn default_fusion() -> Vec<FusionMethod> {
    FusionMethod::ALL.to_vec()
}

fn default_train_sizes() -> Vec<usize> {
    vec![1000, 2000, 5000]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_n_test() -> usize {
    500
}

fn default_val_fraction() -> f64 {
    0.1
}

/// Evaluation parameters shared by all cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixEval {
    pub passes: usize,
    pub lambda: f64,
    pub alert_limit: f64,
    pub curve_form: CurveForm,
    pub integrity: bool,
}

impl Default for MatrixEval {
    fn default() -> Self {
        let d = EvalSettings::default();
        Self {
            passes: d.passes,
            lambda: d.lambda,
            alert_limit: d.alert_limit,
            curve_form: d.curve_form,
            integrity: d.integrity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Environment JSON; relative paths resolve against the spec file. When
    /// absent, each seed uses the built-in desk environment for that seed.
    #[serde(default)]
    pub environment: Option<PathBuf>,
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<ScenarioSpec>,
    pub modes: Vec<TrainMode>,
    pub losses: Vec<LossKind>,
    #[serde(default = "default_fusion")]
    pub fusion: Vec<FusionMethod>,
    /// Exact training-split sizes; validation comes on top.
    #[serde(default = "default_train_sizes")]
    pub train_sizes: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    /// Base training config; mode, loss and seed are set per cell.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: MatrixEval,
    /// Output directory; relative paths resolve against the spec file.
    pub output: PathBuf,
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let mut spec: ExperimentSpec = serde_json::from_str(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(env) = &spec.environment {
            spec.environment = Some(base.join(env));
        }
        spec.output = base.join(&spec.output);
        Ok(spec)
    }

    fn split(&self) -> SplitSpec {
        SplitSpec {
            val_fraction: self.val_fraction,
            n_test: self.n_test,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.modes.is_empty() || self.losses.is_empty() {
            return fail("the mode and loss lists must be non-empty");
        }
        if self.fusion.is_empty() {
            return fail("the fusion list must be non-empty");
        }
        if self.scenarios.is_empty() || self.train_sizes.is_empty() || self.seeds.is_empty() {
            return fail("scenarios, training sizes and seeds must be non-empty");
        }
        if self.n_test < 2 {
            return fail("n_test must be at least 2");
        }
        for &n in &self.train_sizes {
            if self.split().pool_for_train(n).is_none() {
                return Err(Error::Config(format!(
                    "training size {n} cannot be met with validation fraction {}",
                    self.val_fraction
                )));
            }
        }
        for mode in &self.modes {
            for loss in &self.losses {
                self.cell_config(*mode, *loss, 0).validate()?;
            }
        }
        self.eval_settings(0).validate()
    }

    fn cell_config(&self, mode: TrainMode, loss: LossKind, seed: u64) -> TrainConfig {
        TrainConfig {
            mode,
            loss,
            seed,
            ..self.train.clone()
        }
    }

    fn eval_settings(&self, seed: u64) -> EvalSettings {
        EvalSettings {
            fusion: self.fusion.clone(),
            passes: self.eval.passes,
            lambda: self.eval.lambda,
            alert_limit: self.eval.alert_limit,
            curve_form: self.eval.curve_form,
            seed,
            integrity: self.eval.integrity,
        }
    }

    fn environment(&self, seed: u64) -> Result<Environment> {
        match &self.environment {
            Some(path) => Environment::load(path),
            None => Ok(Environment::desk_default(seed)),
        }
    }

    /// Cells in execution order.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &n_train in &self.train_sizes {
            for &seed in &self.seeds {
                for &mode in &self.modes {
                    for &loss in &self.losses {
                        out.push(CellKey {
                            mode,
                            loss,
                            n_train,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }

    /// Methods reported per scenario for a mode.
    pub fn methods(&self, mode: TrainMode) -> Vec<String> {
        self.eval_settings(0).methods(mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellKey {
    pub mode: TrainMode,
    pub loss: LossKind,
    pub n_train: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mode: TrainMode,
    pub loss: LossKind,
    pub fusion: String,
    pub scenario: String,
    pub n_train: usize,
    pub seed: u64,
    pub me: Option<f64>,
    pub ause: Option<f64>,
    pub ir: Option<f64>,
    pub runtime_s: Option<f64>,
    pub status: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CellRecord {
    key: CellKey,
    hash: String,
    runtime_s: f64,
    rows: Vec<SummaryRow>,
}

#[derive(Debug, Default)]
pub struct MatrixOutcome {
    pub rows: Vec<SummaryRow>,
    pub ran: usize,
    pub skipped: usize,
    pub failures: Vec<(CellKey, Error)>,
}

/// Everything that determines a cell's outputs.
#[derive(Serialize)]
struct CellIdentity<'a> {
    key: CellKey,
    env_hash: u64,
    train: TrainConfig,
    eval: EvalSettings,
    scenarios: &'a [ScenarioSpec],
    n_test: usize,
    val_fraction: f64,
    version: &'a str,
}

fn cell_hash(spec: &ExperimentSpec, key: CellKey, env_hash: u64) -> String {
    let id = CellIdentity {
        key,
        env_hash,
        train: spec.cell_config(key.mode, key.loss, key.seed),
        eval: spec.eval_settings(key.seed),
        scenarios: &spec.scenarios,
        n_test: spec.n_test,
        val_fraction: spec.val_fraction,
        version: VERSION,
    };
    let json = serde_json::to_string(&id).expect("cell identity serializes");
    sha256_hex(json.as_bytes())[..16].to_string()
}

/// Datasets of one (training size, seed) pair: the static training set
/// and one dataset per scenario sharing its positions and splits.
struct DataGroup {
    n_train: usize,
    seed: u64,
    train: Dataset,
    scenarios: Vec<Dataset>,
}

fn build_group(spec: &ExperimentSpec, env: &Environment, n_train: usize, seed: u64) -> Result<DataGroup> {
    let split = spec.split();
    let pool = split
        .pool_for_train(n_train)
        .ok_or_else(|| Error::Config(format!("training size {n_train} is unreachable")))?;
    info!("generating datasets for n_train={n_train} seed={seed}");
    let train = gen_dataset(env, pool, &ScenarioSpec::Static, &split)?;
    let scenarios = spec
        .scenarios
        .iter()
        .map(|s| match s {
            ScenarioSpec::Static => Ok(train.clone()),
            _ => gen_dataset(env, pool, s, &split),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DataGroup {
        n_train,
        seed,
        train,
        scenarios,
    })
}

fn failure_rows(spec: &ExperimentSpec, key: CellKey, status: &str) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for s in &spec.scenarios {
        for m in spec.methods(key.mode) {
            rows.push(SummaryRow {
                mode: key.mode,
                loss: key.loss,
                fusion: m,
                scenario: s.label(),
                n_train: key.n_train,
                seed: key.seed,
                me: None,
                ause: None,
                ir: None,
                runtime_s: None,
                status: status.to_string(),
            });
        }
    }
    rows
}

fn run_cell(spec: &ExperimentSpec, key: CellKey, data: &DataGroup, dir: &Path) -> Result<Vec<SummaryRow>> {
    let start = Instant::now();
    fs::create_dir_all(dir)?;
    let cfg = spec.cell_config(key.mode, key.loss, key.seed);
    let bundle = train(&data.train, &cfg)?;
    bundle.save(&dir.join("model.pfmb"))?;
    bundle.write_history_csv(fs::File::create(dir.join("history.csv"))?)?;

    let mut settings = spec.eval_settings(key.seed);
    let fits: Vec<(String, ThresholdFit)> = if settings.integrity {
        match fit_thresholds(&bundle, &data.train, &settings) {
            Ok(f) => f,
            Err(e) => {
                warn!("{key:?}: threshold fit failed, integrity risk omitted: {e}");
                settings.integrity = false;
                Vec::new()
            }
        }
    } else {
        Vec::new()
    };

    let mut outcomes = Vec::new();
    for ds in &data.scenarios {
        let outcome = evaluate(&bundle, ds, Some(ThresholdSource::Fitted(&fits)), &settings)?;
        write_outcome(dir, &outcome)?;
        outcomes.push(outcome);
    }
    let runtime = start.elapsed().as_secs_f64();
    let mut rows = Vec::new();
    for (outcome, s) in outcomes.iter().zip(&spec.scenarios) {
        for m in &outcome.methods {
            rows.push(SummaryRow {
                mode: key.mode,
                loss: key.loss,
                fusion: m.report.method.clone(),
                scenario: s.label(),
                n_train: key.n_train,
                seed: key.seed,
                me: Some(m.report.mean_error.mean),
                ause: Some(m.report.ause),
                ir: m.report.integrity_risk,
                runtime_s: Some(runtime),
                status: "ok".to_string(),
            });
        }
    }
    let record = CellRecord {
        key,
        hash: dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        runtime_s: runtime,
        rows: rows.clone(),
    };
    let tmp = dir.join("cell.json.tmp");
    fs::write(&tmp, serde_json::to_string_pretty(&record)? + "\n")?;
    fs::rename(tmp, dir.join("cell.json"))?;
    Ok(rows)
}

fn load_done(dir: &Path) -> Option<Vec<SummaryRow>> {
    let text = fs::read_to_string(dir.join("cell.json")).ok()?;
    serde_json::from_str::<CellRecord>(&text).ok().map(|r| r.rows)
}

pub const SUMMARY_HEADER: [&str; 11] = [
    "mode",
    "loss",
    "fusion",
    "scenario",
    "n_train",
    "seed",
    "me",
    "ause",
    "ir",
    "runtime_s",
    "status",
];

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(fs::File::create(path)?);
    let io = |e: csv::Error| Error::Io(e.into());
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    w.write_record(SUMMARY_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.mode.as_str().to_string(),
            r.loss.as_str().to_string(),
            r.fusion.clone(),
            r.scenario.clone(),
            r.n_train.to_string(),
            r.seed.to_string(),
            opt(r.me),
            opt(r.ause),
            opt(r.ir),
            opt(r.runtime_s),
            r.status.clone(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every cell not yet completed under `spec.output` and writes
/// `summary.csv`. Cell failures are recorded, not propagated.
pub fn run_matrix(spec: &ExperimentSpec) -> Result<MatrixOutcome> {
    spec.validate()?;
    let cells_dir = spec.output.join("cells");
    fs::create_dir_all(&cells_dir)?;

    let mut outcome = MatrixOutcome::default();
    let mut envs: Vec<(u64, Environment)> = Vec::new();
    for &seed in &spec.seeds {
        let env = spec.environment(seed)?;
        env.validate()?;
        for s in &spec.scenarios {
            s.validate(env.anchors.len())?;
        }
        envs.push((seed, env));
    }

    let mut group: Option<DataGroup> = None;
    for key in spec.cells() {
        let env = &envs.iter().find(|(s, _)| *s == key.seed).expect("env per seed").1;
        let hash = cell_hash(spec, key, env.descriptor_hash());
        let dir = cells_dir.join(&hash);
        if let Some(rows) = load_done(&dir) {
            info!("skipping completed cell {hash}");
            outcome.skipped += 1;
            outcome.rows.extend(rows);
            continue;
        }
        let fresh = !matches!(&group, Some(g) if g.n_train == key.n_train && g.seed == key.seed);
        if fresh {
            group = None;
            match build_group(spec, env, key.n_train, key.seed) {
                Ok(g) => group = Some(g),
                Err(e) => {
                    warn!("{key:?}: dataset generation failed: {e}");
                    outcome.rows.extend(failure_rows(spec, key, &format!("error: {e}")));
                    outcome.failures.push((key, e));
                    continue;
                }
            }
        }
        let data = group.as_ref().expect("group built");
        info!("running cell {hash}: {key:?}");
        match run_cell(spec, key, data, &dir) {
            Ok(rows) => {
                outcome.ran += 1;
                outcome.rows.extend(rows);
            }
            Err(e) => {
                warn!("{key:?}: cell failed: {e}");
                let _ = fs::write(dir.join("error.txt"), format!("{e}\n"));
                outcome.rows.extend(failure_rows(spec, key, &format!("error: {e}")));
                outcome.failures.push((key, e));
            }
        }
    }
    write_summary(&spec.output.join("summary.csv"), &outcome.rows)?;
    Ok(outcome)
}
