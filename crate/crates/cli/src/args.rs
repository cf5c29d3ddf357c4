use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use posfuse_core::fusion::FusionMethod;
use posfuse_core::metrics::CurveForm;
use posfuse_core::nn::LossKind;
use posfuse_core::training::TrainMode;

#[derive(Debug, Parser)]
#[command(name = "posfuse", version, about = "Multi-anchor CSI positioning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset container.
    Gen(GenArgs),
    /// Train a model bundle on a dataset.
    Train(TrainArgs),
    /// Evaluate a bundle: fusion, mean error, AUSE and integrity risk.
    Eval(EvalArgs),
    /// Run an experiment matrix described by a JSON spec.
    Matrix(MatrixArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Environment JSON; defaults to the built-in desk environment.
    #[arg(long)]
    pub env: Option<PathBuf>,
    /// Seed of the built-in environment (ignored with --env).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Training pool size (train plus validation).
    #[arg(long, conflicts_with = "n_train", required_unless_present = "n_train")]
    pub samples: Option<usize>,
    /// Exact training-split size; the pool is sized to fit.
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Test samples.
    #[arg(long, default_value_t = 0)]
    pub test: usize,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    /// `static` or `dynamic:<ids>`, e.g. `dynamic:1,3`.
    #[arg(long, default_value = "static")]
    pub scenario: String,
    /// Attenuation of the strongest path in dynamic scenarios, dB.
    #[arg(long, default_value_t = 20.0)]
    pub atten_db: f64,
    /// Side of the attenuated angle-delay block.
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Early,
    Stl,
    Mtl,
}

impl From<ModeArg> for TrainMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Early => TrainMode::Early,
            ModeArg::Stl => TrainMode::Stl,
            ModeArg::Mtl => TrainMode::Mtl,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    Mse,
    Nll,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Mse => LossKind::Mse,
            LossArg::Nll => LossKind::Nll,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Training config JSON; omitted fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Training history CSV; defaults to `<out>.history.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FusionArg {
    Avg,
    Ivw,
    Sp,
}

impl From<FusionArg> for FusionMethod {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Avg => FusionMethod::Avg,
            FusionArg::Ivw => FusionMethod::Ivw,
            FusionArg::Sp => FusionMethod::Sp,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CurveArg {
    Printed,
    Rmse,
}

impl From<CurveArg> for CurveForm {
    fn from(c: CurveArg) -> Self {
        match c {
            CurveArg::Printed => CurveForm::Printed,
            CurveArg::Rmse => CurveForm::Rmse,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Static dataset used to fit the warning threshold for a dynamic one.
    #[arg(long)]
    pub static_ref: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["avg", "ivw", "sp"])]
    pub fusion: Vec<FusionArg>,
    /// Monte-Carlo dropout passes.
    #[arg(long, default_value_t = 30)]
    pub passes: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    /// Alert limit in meters.
    #[arg(long, default_value_t = 1.0)]
    pub alert_limit: f64,
    #[arg(long, value_enum, default_value = "printed")]
    pub curve_form: CurveArg,
    /// Seed of the prediction-time dropout masks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the threshold fit and integrity risk.
    #[arg(long)]
    pub no_ir: bool,
    /// Output directory for reports and curves.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MatrixArgs {
    /// Experiment spec JSON.
    pub spec: PathBuf,
}
