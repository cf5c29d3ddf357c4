use log::{debug, info};
use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::bundle::{EpochRecord, History, ModelBundle, ModelGroup};
use super::config::{TrainConfig, TrainMode};
use super::schedule::PlateauSchedule;
use crate::channel_sim::Dataset;
use crate::nn::{adam_step, forward, loss, mtl_loss, AdamState, Head, LossKind, NoMasks, OutputMode, Trunk};
use crate::rng::{self, domain};
use crate::{AnchorId, Error, Result};

/// Network inputs for a set of samples: one matrix per head plus labels.
pub(crate) struct Batch {
    pub inputs: Vec<Array2<f64>>,
    pub labels: Array2<f64>,
}

/// Builds inputs for `indices`. Late modes get one matrix per anchor; early
/// mode gets a single matrix of anchor-concatenated fingerprints.
pub(crate) fn gather(dataset: &Dataset, indices: &[u32], mode: TrainMode) -> Batch {
    let fp_len = dataset.fingerprint_len();
    let rows = indices.len();
    let labels = Array2::from_shape_fn((rows, 2), |(i, c)| {
        let p = dataset.samples[indices[i] as usize].position;
        if c == 0 {
            p.x
        } else {
            p.y
        }
    });
    let inputs = match mode {
        TrainMode::Early => {
            let mut x = Array2::zeros((rows, dataset.anchors * fp_len));
            for (mut row, &i) in x.rows_mut().into_iter().zip(indices) {
                let fps = &dataset.samples[i as usize].fingerprints;
                for (a, fp) in fps.iter().enumerate() {
                    row.slice_mut(ndarray::s![a * fp_len..(a + 1) * fp_len])
                        .iter_mut()
                        .zip(&fp.values)
                        .for_each(|(d, s)| *d = *s);
                }
            }
            vec![x]
        }
        TrainMode::Stl | TrainMode::Mtl => (0..dataset.anchors)
            .map(|a| {
                let mut x = Array2::zeros((rows, fp_len));
                for (mut row, &i) in x.rows_mut().into_iter().zip(indices) {
                    row.iter_mut()
                        .zip(&dataset.samples[i as usize].fingerprints[a].values)
                        .for_each(|(d, s)| *d = *s);
                }
                x
            })
            .collect(),
    };
    Batch { inputs, labels }
}

fn round_to_f32(params: &mut [f64]) {
    params.iter_mut().for_each(|p| *p = *p as f32 as f64);
}

fn views(b: &Batch, range: std::ops::Range<usize>) -> Vec<ArrayView2<'_, f64>> {
    b.inputs[range].iter().map(|x| x.view()).collect()
}

/// Deterministic (dropout-free) summed loss of all heads.
fn evaluate(
    trunk: &Trunk,
    heads: &[Head],
    inputs: &[ArrayView2<f64>],
    labels: ArrayView2<f64>,
    kind: LossKind,
) -> Result<f64> {
    heads
        .iter()
        .zip(inputs)
        .map(|(h, x)| {
            let out = forward(trunk, h, x.view(), &mut NoMasks)?;
            Ok(loss(kind, out.view(), labels)?.value)
        })
        .sum()
}

struct GroupSetup<'a> {
    name: String,
    trunk: Trunk,
    heads: Vec<Head>,
    train: Vec<ArrayView2<'a, f64>>,
    val: Vec<ArrayView2<'a, f64>>,
    shuffle_key: u64,
    dropout_keys: Vec<u64>,
}

fn fit_group(
    setup: GroupSetup<'_>,
    train_labels: ArrayView2<f64>,
    val_labels: ArrayView2<f64>,
    cfg: &TrainConfig,
) -> Result<ModelGroup> {
    let GroupSetup {
        name,
        mut trunk,
        mut heads,
        train,
        val,
        shuffle_key,
        dropout_keys,
    } = setup;
    round_to_f32(trunk.net.params_mut());
    heads.iter_mut().for_each(|h| round_to_f32(h.net.params_mut()));

    let mut history = History {
        initial_train_loss: evaluate(&trunk, &heads, &train, train_labels, cfg.loss)?,
        initial_val_loss: evaluate(&trunk, &heads, &val, val_labels, cfg.loss)?,
        best_epoch: 0,
        epochs: Vec::with_capacity(cfg.epochs),
    };
    if !history.initial_val_loss.is_finite() || !history.initial_train_loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: 0,
            last_good_epoch: 0,
        });
    }
    let mut schedule = PlateauSchedule::new(
        cfg.learning_rate,
        cfg.reduced_learning_rate,
        cfg.patience,
        history.initial_val_loss,
    );
    let mut shuffle = rng::keyed(cfg.seed, &[domain::SHUFFLE, shuffle_key]);
    let mut streams: Vec<_> = dropout_keys
        .iter()
        .map(|&k| rng::keyed(cfg.seed, &[domain::DROPOUT, k]))
        .collect();
    let mut trunk_adam = AdamState::new(trunk.net.param_count(), cfg.learning_rate);
    let mut head_adams: Vec<_> = heads
        .iter()
        .map(|h| AdamState::new(h.net.param_count(), cfg.learning_rate))
        .collect();

    let n = train_labels.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut best: Option<(f64, Trunk, Vec<Head>)> = None;
    for epoch in 1..=cfg.epochs {
        let lr = schedule.lr();
        trunk_adam.lr = lr;
        head_adams.iter_mut().for_each(|a| a.lr = lr);
        order.shuffle(&mut shuffle);
        let non_finite = || Error::NonFiniteLoss {
            epoch,
            last_good_epoch: epoch - 1,
        };
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xs: Vec<Array2<f64>> = train.iter().map(|x| x.select(Axis(0), chunk)).collect();
            let views: Vec<ArrayView2<f64>> = xs.iter().map(|x| x.view()).collect();
            let ys = train_labels.select(Axis(0), chunk);
            let eval = mtl_loss(&trunk, &heads, &views, ys.view(), cfg.loss, &mut streams)?;
            if !eval.loss.is_finite() {
                return Err(non_finite());
            }
            adam_step(trunk.net.params_mut(), &eval.trunk_grad, &mut trunk_adam).map_err(|_| non_finite())?;
            round_to_f32(trunk.net.params_mut());
            for ((h, g), a) in heads.iter_mut().zip(&eval.head_grads).zip(&mut head_adams) {
                adam_step(h.net.params_mut(), g, a).map_err(|_| non_finite())?;
                round_to_f32(h.net.params_mut());
            }
            loss_sum += eval.loss * chunk.len() as f64;
        }
        let val_loss = evaluate(&trunk, &heads, &val, val_labels, cfg.loss)?;
        if !val_loss.is_finite() {
            return Err(non_finite());
        }
        let train_loss = loss_sum / n as f64;
        debug!("{name} epoch {epoch}: train {train_loss:.5} val {val_loss:.5} lr {lr}");
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        schedule.observe(val_loss);
        if best.as_ref().is_none_or(|b| val_loss < b.0) {
            history.best_epoch = epoch;
            best = Some((val_loss, trunk.clone(), heads.clone()));
        }
    }
    let (best_val, trunk, heads) = best.expect("at least one epoch");
    info!(
        "{name}: best validation loss {best_val:.5} at epoch {}",
        history.best_epoch
    );
    Ok(ModelGroup {
        name,
        trunk,
        heads,
        history,
    })
}

/// Column means and population variances of the labels.
fn label_stats(labels: ArrayView2<f64>) -> ([f64; 2], [f64; 2]) {
    let n = labels.nrows() as f64;
    let mut mean = [0.0; 2];
    let mut var = [0.0; 2];
    for c in 0..2 {
        let col = labels.column(c);
        mean[c] = col.sum() / n;
        var[c] = col.iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>() / n;
    }
    (mean, var)
}

fn new_head(anchor: AnchorId, trunk: &Trunk, cfg: &TrainConfig, key: u64, stats: ([f64; 2], [f64; 2])) -> Head {
    let mut head = Head::new(
        anchor,
        trunk.feature_dim(),
        &cfg.head_widths,
        cfg.output_mode(),
        cfg.dropout,
        &mut rng::keyed(cfg.seed, &[domain::INIT_HEAD, key]),
    );
    // Start at the label centroid with the label spread as the variance.
    let (mean, var) = stats;
    for c in 0..2 {
        head.net.set_output_bias(c, mean[c]);
        if cfg.output_mode() == OutputMode::PositionLogVariance {
            head.net.set_output_bias(c + 2, var[c].max(1e-6).ln());
        }
    }
    head
}

fn new_trunk(input: usize, cfg: &TrainConfig, key: u64) -> Trunk {
    Trunk::new(
        input,
        &cfg.trunk_widths,
        cfg.dropout,
        &mut rng::keyed(cfg.seed, &[domain::INIT_TRUNK, key]),
    )
}

/// Trains the networks selected by `cfg.mode` on the training split, using
/// the validation split for the rate schedule and model selection.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<ModelBundle> {
    cfg.validate()?;
    dataset.validate()?;
    let splits = &dataset.splits;
    if splits.train.is_empty() || splits.validation.is_empty() {
        return Err(Error::data("training needs non-empty train and validation splits"));
    }
    let altered = splits
        .train
        .iter()
        .chain(&splits.validation)
        .any(|&i| !dataset.samples[i as usize].scenario.is_static());
    if altered {
        return Err(Error::data(
            "training and validation samples must come from the static scenario",
        ));
    }
    let train_data = gather(dataset, &splits.train, cfg.mode);
    let val_data = gather(dataset, &splits.validation, cfg.mode);
    let stats = label_stats(train_data.labels.view());
    let input_dim = train_data.inputs[0].ncols();
    let (tl, vl) = (train_data.labels.view(), val_data.labels.view());
    let anchors = dataset.anchors;

    let groups = match cfg.mode {
        TrainMode::Early => {
            let trunk = new_trunk(input_dim, cfg, 0);
            let head = new_head(AnchorId::JOINT, &trunk, cfg, 0, stats);
            let setup = GroupSetup {
                name: "joint".into(),
                trunk,
                heads: vec![head],
                train: views(&train_data, 0..1),
                val: views(&val_data, 0..1),
                shuffle_key: 0,
                dropout_keys: vec![0],
            };
            vec![fit_group(setup, tl, vl, cfg)?]
        }
        TrainMode::Stl => (0..anchors)
            .into_par_iter()
            .map(|a| {
                let anchor = AnchorId::from_index(a);
                let key = u64::from(anchor.0);
                let trunk = new_trunk(input_dim, cfg, key);
                let head = new_head(anchor, &trunk, cfg, key, stats);
                let setup = GroupSetup {
                    name: format!("anchor-{anchor}"),
                    trunk,
                    heads: vec![head],
                    train: views(&train_data, a..a + 1),
                    val: views(&val_data, a..a + 1),
                    shuffle_key: key,
                    dropout_keys: vec![key],
                };
                fit_group(setup, tl, vl, cfg)
            })
            .collect::<Result<Vec<_>>>()?,
        TrainMode::Mtl => {
            let trunk = new_trunk(input_dim, cfg, 1);
            let heads: Vec<Head> = (0..anchors)
                .map(|a| {
                    let anchor = AnchorId::from_index(a);
                    new_head(anchor, &trunk, cfg, u64::from(anchor.0), stats)
                })
                .collect();
            let setup = GroupSetup {
                name: "shared".into(),
                trunk,
                heads,
                train: views(&train_data, 0..anchors),
                val: views(&val_data, 0..anchors),
                shuffle_key: 1,
                dropout_keys: (1..=anchors as u64).collect(),
            };
            vec![fit_group(setup, tl, vl, cfg)?]
        }
    };
    let bundle = ModelBundle {
        mode: cfg.mode,
        loss: cfg.loss,
        anchors,
        groups,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Dropout-free loss of every model group on the validation split, in
/// group order.
pub fn validation_loss(bundle: &ModelBundle, dataset: &Dataset) -> Result<Vec<f64>> {
    let data = gather(dataset, &dataset.splits.validation, bundle.mode);
    let labels = data.labels.view();
    let mut offset = 0;
    bundle
        .groups
        .iter()
        .map(|g| {
            let n = g.heads.len();
            let range = if bundle.mode == TrainMode::Early {
                0..1
            } else {
                offset..offset + n
            };
            offset += n;
            if range.end > data.inputs.len() {
                return Err(Error::domain("bundle has more heads than the dataset has anchors"));
            }
            evaluate(&g.trunk, &g.heads, &views(&data, range), labels, bundle.loss)
        })
        .collect()
}
