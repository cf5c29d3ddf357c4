//! Subcommand implementations. Human-readable summaries go to `out`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use posfuse_core::channel_sim::{gen_dataset, Dataset, Environment, ScenarioSpec, SplitSpec};
use posfuse_core::training::{train, ModelBundle, TrainConfig};
use posfuse_core::{AnchorId, Error, ErrorKind, Result};

use crate::args::{Command, EvalArgs, GenArgs, MatrixArgs, TrainArgs};
use crate::eval::{evaluate, write_outcome, EvalSettings, ThresholdSource};
use crate::matrix::{run_matrix, ExperimentSpec};

pub fn run(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Gen(a) => cmd_gen(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Matrix(a) => cmd_matrix(&a, out),
    }
}

/// Parses `static` or `dynamic:<id>[,<id>...]`.
pub fn parse_scenario(text: &str, atten_db: f64, window: usize) -> Result<ScenarioSpec> {
    let text = text.trim();
    if text == "static" {
        return Ok(ScenarioSpec::Static);
    }
    let ids = text
        .strip_prefix("dynamic:")
        .ok_or_else(|| Error::Config(format!("scenario must be 'static' or 'dynamic:<ids>', got '{text}'")))?;
    let anchors = ids
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<u16>()
                .map(AnchorId)
                .map_err(|_| Error::Config(format!("invalid anchor id '{s}' in scenario")))
        })
        .collect::<Result<Vec<_>>>()?;
    if anchors.is_empty() {
        return Err(Error::Config("dynamic scenario needs at least one anchor".into()));
    }
    Ok(ScenarioSpec::Dynamic {
        anchors,
        atten_db,
        window,
    })
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io(e)
}

pub fn cmd_gen(a: &GenArgs, out: &mut dyn Write) -> Result<()> {
    let env = match &a.env {
        Some(p) => Environment::load(p)?,
        None => Environment::desk_default(a.seed),
    };
    let scenario = parse_scenario(&a.scenario, a.atten_db, a.window)?;
    scenario.validate(env.anchors.len())?;
    let split = SplitSpec {
        val_fraction: a.val_fraction,
        n_test: a.test,
    };
    let pool = match (a.samples, a.n_train) {
        (Some(n), _) => n,
        (None, Some(n)) => split.pool_for_train(n).ok_or_else(|| {
            Error::Config(format!(
                "training size {n} is unreachable with validation fraction {}",
                a.val_fraction
            ))
        })?,
        (None, None) => return Err(Error::Config("either --samples or --n-train is required".into())),
    };
    let ds = gen_dataset(&env, pool, &scenario, &split)?;
    ds.save(&a.out)?;
    writeln!(out, "wrote {}", a.out.display()).map_err(io_err)?;
    write_dataset_summary(&ds, &scenario.label(), out)
}

fn write_dataset_summary(ds: &Dataset, scenario: &str, out: &mut dyn Write) -> Result<()> {
    let s = &ds.splits;
    writeln!(
        out,
        "anchors {}, antennas {}, subcarriers {}\nsamples {}: train {}, validation {}, test {}\nscenario {scenario}\ncontent hash {}",
        ds.anchors,
        ds.antennas,
        ds.subcarriers,
        ds.samples.len(),
        s.train.len(),
        s.validation.len(),
        s.test.len(),
        ds.content_hash()
    )
    .map_err(io_err)
}

fn default_history_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".history.csv");
    PathBuf::from(name)
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => TrainConfig::default(),
    };
    if let Some(m) = a.mode {
        cfg.mode = m.into();
    }
    if let Some(l) = a.loss {
        cfg.loss = l.into();
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let ds = Dataset::load(&a.data)?;
    let bundle = train(&ds, &cfg)?;
    bundle.save(&a.out)?;
    let history = a.history.clone().unwrap_or_else(|| default_history_path(&a.out));
    bundle.write_history_csv(fs::File::create(&history)?)?;
    for g in &bundle.groups {
        writeln!(
            out,
            "{}: best validation loss {} at epoch {}",
            g.name,
            g.history.best_val_loss(),
            g.history.best_epoch
        )
        .map_err(io_err)?;
    }
    writeln!(
        out,
        "wrote {} ({} mode, {} loss, {} parameters, hash {})\nwrote {}",
        a.out.display(),
        cfg.mode.as_str(),
        cfg.loss.as_str(),
        bundle.param_count(),
        bundle.content_hash(),
        history.display()
    )
    .map_err(io_err)
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let settings = EvalSettings {
        fusion: a.fusion.iter().map(|&f| f.into()).collect(),
        passes: a.passes,
        lambda: a.lambda,
        alert_limit: a.alert_limit,
        curve_form: a.curve_form.into(),
        seed: a.seed,
        integrity: !a.no_ir,
    };
    settings.validate()?;
    let bundle = ModelBundle::load(&a.model)?;
    let ds = Dataset::load(&a.data)?;
    let static_ref = a.static_ref.as_deref().map(Dataset::load).transpose()?;
    let source = static_ref.as_ref().map(ThresholdSource::StaticReference);
    let outcome = evaluate(&bundle, &ds, source, &settings)?;
    write_outcome(&a.out, &outcome)?;

    writeln!(
        out,
        "scenario {} ({} test samples)",
        outcome.scenario,
        ds.splits.test.len()
    )
    .map_err(io_err)?;
    for (anchor, s) in &outcome.per_anchor {
        writeln!(out, "  anchor {anchor}: ME {:.4}", s.mean).map_err(io_err)?;
    }
    for m in &outcome.methods {
        let r = &m.report;
        let ir = match (r.integrity_risk, r.threshold) {
            (Some(ir), Some(t)) => format!(" IR {ir:.4} (gamma {:.4})", t.gamma),
            _ => String::new(),
        };
        writeln!(
            out,
            "  {}: ME {:.4} AUSE {:.4}{ir}",
            r.method, r.mean_error.mean, r.ause
        )
        .map_err(io_err)?;
    }
    writeln!(out, "wrote reports to {}", a.out.display()).map_err(io_err)
}

pub fn cmd_matrix(a: &MatrixArgs, out: &mut dyn Write) -> Result<()> {
    let spec = ExperimentSpec::load(&a.spec)?;
    let outcome = run_matrix(&spec)?;
    let failed = outcome.failures.len();
    writeln!(
        out,
        "cells run {}, skipped {}, failed {}\nwrote {}",
        outcome.ran,
        outcome.skipped,
        outcome.failures.len(),
        spec.output.join("summary.csv").display()
    )
    .map_err(io_err)?;
    // The matrix completes; the first failed cell decides the exit code.
    match outcome.failures.into_iter().next() {
        Some((key, e)) => {
            let msg = format!("{} of the matrix cells failed; first {key:?}: {e}", failed);
            Err(match e.kind() {
                ErrorKind::Config => Error::Config(msg),
                ErrorKind::Data => Error::Data(msg),
                ErrorKind::Numeric => Error::Numeric(msg),
            })
        }
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_parsing() {
        assert_eq!(parse_scenario("static", 20.0, 3).unwrap(), ScenarioSpec::Static);
        assert_eq!(
            parse_scenario("dynamic:1,3", 20.0, 3).unwrap(),
            ScenarioSpec::dynamic(vec![AnchorId(1), AnchorId(3)])
        );
        for bad in ["dyn", "dynamic:", "dynamic:a", "dynamic:1,,2"] {
            assert!(matches!(parse_scenario(bad, 20.0, 3), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn history_path_appends_suffix() {
        assert_eq!(
            default_history_path(Path::new("a/m.pfmb")),
            PathBuf::from("a/m.pfmb.history.csv")
        );
    }
}
