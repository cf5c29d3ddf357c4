//! Binary dataset container.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic      4 bytes  "PFDS"
//! version    u16      currently 1
//! anchors    u32      N_B
//! antennas   u32      N_R
//! subcarr.   u32      N_C
//! samples    u64
//! env hash   u64      0 when the data did not come from the simulator
//! per sample:
//!   x, y     f64, f64
//!   tag      u8       bitmask of altered anchors, 0 = static
//!   N_B fingerprints, each N_R * N_C * 2 f32 (antenna-major,
//!   subcarrier-minor, plane-last)
//! splits: train, validation, test, each as u32 count + u32 indices
//! ```
//!
//! Externally produced fingerprints (e.g. converted measurements) can be
//! imported by writing this layout; the toolkit does not depend on the
//! simulator once a container exists.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::dataset::{Dataset, Sample, ScenarioTag, Splits};
use super::env::Point2;
use super::fingerprint::Fingerprint;
use crate::binio::{LeReader, LeWriter};
use crate::{AnchorId, Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"PFDS";
pub const DATASET_VERSION: u16 = 1;

pub fn write_dataset<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut w = LeWriter::new(BufWriter::new(out));
    w.bytes(DATASET_MAGIC)?;
    w.u16(DATASET_VERSION)?;
    w.u32(dataset.anchors as u32)?;
    w.u32(dataset.antennas as u32)?;
    w.u32(dataset.subcarriers as u32)?;
    w.u64(dataset.samples.len() as u64)?;
    w.u64(dataset.env_hash)?;
    for s in &dataset.samples {
        w.f64(s.position.x)?;
        w.f64(s.position.y)?;
        w.u8(s.scenario.0)?;
        for fp in &s.fingerprints {
            w.f32_slice_from_f64(&fp.values)?;
        }
    }
    for split in [&dataset.splits.train, &dataset.splits.validation, &dataset.splits.test] {
        w.u32(split.len() as u32)?;
        for &i in split {
            w.u32(i)?;
        }
    }
    w.into_inner().flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(input: R) -> Result<Dataset> {
    let mut r = LeReader::new(BufReader::new(input));
    let mut magic = [0u8; 4];
    r.exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::data("not a dataset container (bad magic)"));
    }
    let version = r.u16()?;
    if version != DATASET_VERSION {
        return Err(Error::data(format!("unsupported dataset version {version}")));
    }
    let anchors = r.u32()? as usize;
    let antennas = r.u32()? as usize;
    let subcarriers = r.u32()? as usize;
    let count = r.u64()? as usize;
    let env_hash = r.u64()?;
    let fp_len = antennas
        .checked_mul(subcarriers)
        .and_then(|v| v.checked_mul(2))
        .ok_or_else(|| Error::data("fingerprint dimensions overflow"))?;

    let mut samples = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let position = Point2::new(r.f64()?, r.f64()?);
        let scenario = ScenarioTag(r.u8()?);
        let fingerprints = (0..anchors)
            .map(|a| {
                Ok(Fingerprint {
                    anchor: AnchorId::from_index(a),
                    antennas,
                    subcarriers,
                    values: r.f32_vec_as_f64(fp_len)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        samples.push(Sample {
            position,
            fingerprints,
            scenario,
        });
    }
    let mut read_split = || -> Result<Vec<u32>> {
        let n = r.u32()? as usize;
        (0..n).map(|_| r.u32()).collect()
    };
    let splits = Splits {
        train: read_split()?,
        validation: read_split()?,
        test: read_split()?,
    };
    r.expect_eof()?;

    let dataset = Dataset {
        anchors,
        antennas,
        subcarriers,
        samples,
        splits,
        env_hash,
    };
    dataset.validate()?;
    Ok(dataset)
}

impl Dataset {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_dataset(self, std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_dataset(std::fs::File::open(path)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        write_dataset(self, &mut buf).expect("writing to memory cannot fail");
        buf
    }

    /// SHA-256 of the encoded container.
    pub fn content_hash(&self) -> String {
        crate::hash::sha256_hex(&self.to_bytes())
    }
}
