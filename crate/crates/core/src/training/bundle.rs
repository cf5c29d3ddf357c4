//! Model bundle file.
//!
//! ```text
//! magic        4 bytes "PFMB"
//! version      u16
//! mode         u8      0 early, 1 stl, 2 mtl
//! loss         u8      0 mse, 1 nll
//! anchors      u32
//! groups       u32
//! per group:   name (u32 length + UTF-8), trunk shape, head count,
//!              per head: u16 anchor id + head shape
//!              (shape = u32 layer count, u32 widths, f64 dropout rate)
//! parameters   f32 blocks per group: trunk, then heads in anchor order
//! optimizer    u8 flag, 0 = not stored
//! histories    per group: f64 initial train loss, f64 initial validation
//!              loss, u32 best epoch, u32 record count,
//!              records of (u32 epoch, f64 train, f64 validation, f64 lr)
//! ```

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainMode;
use crate::binio::{LeReader, LeWriter};
use crate::nn::{Head, LossKind, Mlp, Trunk};
use crate::{hash, AnchorId, Error, Result};

pub const BUNDLE_MAGIC: &[u8; 4] = b"PFMB";
pub const BUNDLE_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Rate used during this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub initial_train_loss: f64,
    pub initial_val_loss: f64,
    /// Epoch whose parameters were retained (0 = initialization).
    pub best_epoch: usize,
    pub epochs: Vec<EpochRecord>,
}

impl History {
    /// Validation loss of the retained parameters.
    pub fn best_val_loss(&self) -> f64 {
        match self.best_epoch {
            0 => self.initial_val_loss,
            e => self.epochs[e - 1].val_loss,
        }
    }
}

/// A trunk with one or more heads trained together.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGroup {
    pub name: String,
    pub trunk: Trunk,
    pub heads: Vec<Head>,
    pub history: History,
}

impl ModelGroup {
    pub fn param_count(&self) -> usize {
        self.trunk.net.param_count() + self.heads.iter().map(|h| h.net.param_count()).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub mode: TrainMode,
    pub loss: LossKind,
    pub anchors: usize,
    /// early: one group with a joint head; stl: one group per anchor;
    /// mtl: one group with a head per anchor.
    pub groups: Vec<ModelGroup>,
}

fn write_shape<W: Write>(w: &mut LeWriter<W>, net: &Mlp) -> Result<()> {
    w.u32(net.widths().len() as u32)?;
    for &width in net.widths() {
        w.u32(width as u32)?;
    }
    w.f64(net.dropout())
}

fn read_shape<R: Read>(r: &mut LeReader<R>) -> Result<(Vec<usize>, f64)> {
    let n = r.u32()? as usize;
    if !(2..=64).contains(&n) {
        return Err(Error::data(format!("implausible layer count {n}")));
    }
    let widths = (0..n)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    if widths.iter().any(|&w| w == 0 || w > 1 << 16) {
        return Err(Error::data(format!("implausible layer widths {widths:?}")));
    }
    Ok((widths, r.f64()?))
}

fn mode_code(mode: TrainMode) -> u8 {
    match mode {
        TrainMode::Early => 0,
        TrainMode::Stl => 1,
        TrainMode::Mtl => 2,
    }
}

impl ModelBundle {
    pub fn param_count(&self) -> usize {
        self.groups.iter().map(ModelGroup::param_count).sum()
    }

    /// All heads with the trunk they sit on, in anchor order.
    pub fn heads(&self) -> impl Iterator<Item = (&Trunk, &Head)> {
        self.groups
            .iter()
            .flat_map(|g| g.heads.iter().map(move |h| (&g.trunk, h)))
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = LeWriter::new(BufWriter::new(out));
        w.bytes(BUNDLE_MAGIC)?;
        w.u16(BUNDLE_VERSION)?;
        w.u8(mode_code(self.mode))?;
        w.u8(match self.loss {
            LossKind::Mse => 0,
            LossKind::Nll => 1,
        })?;
        w.u32(self.anchors as u32)?;
        w.u32(self.groups.len() as u32)?;
        for g in &self.groups {
            w.u32(g.name.len() as u32)?;
            w.bytes(g.name.as_bytes())?;
            write_shape(&mut w, &g.trunk.net)?;
            w.u32(g.heads.len() as u32)?;
            for h in &g.heads {
                w.u16(h.anchor.0)?;
                write_shape(&mut w, &h.net)?;
            }
        }
        for g in &self.groups {
            w.f32_slice_from_f64(g.trunk.net.params())?;
            for h in &g.heads {
                w.f32_slice_from_f64(h.net.params())?;
            }
        }
        w.u8(0)?;
        for g in &self.groups {
            let h = &g.history;
            w.f64(h.initial_train_loss)?;
            w.f64(h.initial_val_loss)?;
            w.u32(h.best_epoch as u32)?;
            w.u32(h.epochs.len() as u32)?;
            for e in &h.epochs {
                w.u32(e.epoch as u32)?;
                w.f64(e.train_loss)?;
                w.f64(e.val_loss)?;
                w.f64(e.lr)?;
            }
        }
        w.into_inner().flush()?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut r = LeReader::new(BufReader::new(input));
        let mut magic = [0u8; 4];
        r.exact(&mut magic)?;
        if &magic != BUNDLE_MAGIC {
            return Err(Error::data("not a model bundle (bad magic)"));
        }
        let version = r.u16()?;
        if version != BUNDLE_VERSION {
            return Err(Error::data(format!("unsupported bundle version {version}")));
        }
        let mode = match r.u8()? {
            0 => TrainMode::Early,
            1 => TrainMode::Stl,
            2 => TrainMode::Mtl,
            m => return Err(Error::data(format!("unknown training mode code {m}"))),
        };
        let loss = match r.u8()? {
            0 => LossKind::Mse,
            1 => LossKind::Nll,
            l => return Err(Error::data(format!("unknown loss code {l}"))),
        };
        let anchors = r.u32()? as usize;
        let group_count = r.u32()? as usize;
        if group_count == 0 || group_count > 1 << 16 {
            return Err(Error::data(format!("implausible group count {group_count}")));
        }
        struct Layout {
            name: String,
            trunk: (Vec<usize>, f64),
            heads: Vec<(AnchorId, Vec<usize>, f64)>,
        }
        let mut layouts = Vec::with_capacity(group_count);
        for _ in 0..group_count {
            let len = r.u32()? as usize;
            if len > 1 << 12 {
                return Err(Error::data("group name too long"));
            }
            let mut name = vec![0u8; len];
            r.exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::data("group name is not UTF-8"))?;
            let trunk = read_shape(&mut r)?;
            let head_count = r.u32()? as usize;
            if head_count == 0 || head_count > 1 << 16 {
                return Err(Error::data(format!("implausible head count {head_count}")));
            }
            let heads = (0..head_count)
                .map(|_| {
                    let anchor = AnchorId(r.u16()?);
                    let (widths, dropout) = read_shape(&mut r)?;
                    Ok((anchor, widths, dropout))
                })
                .collect::<Result<Vec<_>>>()?;
            layouts.push(Layout { name, trunk, heads });
        }
        let build = |widths: Vec<usize>, dropout: f64, activate: bool, params: Vec<f64>| {
            Mlp::from_parts(widths, dropout, activate, params)
                .ok_or_else(|| Error::data("inconsistent network shape in bundle"))
        };
        let arity = loss.output_mode();
        let mut groups = Vec::with_capacity(group_count);
        for layout in layouts {
            let (tw, td) = layout.trunk;
            let n = tw.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
            let trunk = Trunk {
                net: build(tw, td, true, r.f32_vec_as_f64(n)?)?,
            };
            let mut heads = Vec::with_capacity(layout.heads.len());
            for (anchor, hw, hd) in layout.heads {
                if hw.last() != Some(&arity.arity()) || hw[0] != trunk.feature_dim() {
                    return Err(Error::data(format!("head {anchor} does not fit its trunk and loss")));
                }
                let n = hw.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
                heads.push(Head {
                    anchor,
                    output: arity,
                    net: build(hw, hd, false, r.f32_vec_as_f64(n)?)?,
                });
            }
            groups.push(ModelGroup {
                name: layout.name,
                trunk,
                heads,
                history: History::default(),
            });
        }
        if r.u8()? != 0 {
            return Err(Error::data("stored optimizer state is not supported"));
        }
        for g in &mut groups {
            let h = &mut g.history;
            h.initial_train_loss = r.f64()?;
            h.initial_val_loss = r.f64()?;
            h.best_epoch = r.u32()? as usize;
            let count = r.u32()? as usize;
            if count > 1 << 24 {
                return Err(Error::data("implausible history length"));
            }
            h.epochs = (0..count)
                .map(|_| {
                    Ok(EpochRecord {
                        epoch: r.u32()? as usize,
                        train_loss: r.f64()?,
                        val_loss: r.f64()?,
                        lr: r.f64()?,
                    })
                })
                .collect::<Result<_>>()?;
            if h.best_epoch > h.epochs.len() {
                return Err(Error::data("best epoch beyond history"));
            }
        }
        r.expect_eof()?;
        let bundle = Self {
            mode,
            loss,
            anchors,
            groups,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    /// Structural consistency of mode, groups and anchor ids.
    pub fn validate(&self) -> Result<()> {
        let head_ids: Vec<AnchorId> = self.heads().map(|(_, h)| h.anchor).collect();
        let expected: Vec<AnchorId> = match self.mode {
            TrainMode::Early => vec![AnchorId::JOINT],
            _ => (0..self.anchors).map(AnchorId::from_index).collect(),
        };
        let groups_ok = match self.mode {
            TrainMode::Early | TrainMode::Mtl => self.groups.len() == 1,
            TrainMode::Stl => self.groups.len() == self.anchors && self.groups.iter().all(|g| g.heads.len() == 1),
        };
        if self.anchors == 0 || head_ids != expected || !groups_ok {
            return Err(Error::data(format!(
                "{} bundle for {} anchors has an inconsistent head layout",
                self.mode.as_str(),
                self.anchors
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory cannot fail");
        buf
    }

    pub fn content_hash(&self) -> String {
        hash::sha256_hex(&self.to_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }

    /// Per-epoch history as CSV: `model, epoch, train_loss, val_loss, lr`.
    pub fn write_history_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.into());
        w.write_record(["model", "epoch", "train_loss", "val_loss", "lr"])
            .map_err(io)?;
        for g in &self.groups {
            let h = &g.history;
            w.write_record([
                g.name.clone(),
                "0".into(),
                h.initial_train_loss.to_string(),
                h.initial_val_loss.to_string(),
                String::new(),
            ])
            .map_err(io)?;
            for e in &h.epochs {
                w.write_record([
                    g.name.clone(),
                    e.epoch.to_string(),
                    e.train_loss.to_string(),
                    e.val_loss.to_string(),
                    e.lr.to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
