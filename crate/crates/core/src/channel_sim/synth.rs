use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;

use super::env::{AnchorGeometry, Environment, Point2};
use crate::{rng, AnchorId, Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Distances below this are clamped to keep inverse-distance gains finite.
const MIN_PATH_LENGTH: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsiDomain {
    AntennaSubcarrier,
    AngleDelay,
}

/// Complex channel of one anchor, antennas x subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiTensor {
    pub anchor: AnchorId,
    pub domain: CsiDomain,
    pub data: Array2<Complex64>,
}

impl CsiTensor {
    pub fn new(anchor: AnchorId, data: Array2<Complex64>) -> Self {
        Self {
            anchor,
            domain: CsiDomain::AntennaSubcarrier,
            data,
        }
    }

    pub fn antennas(&self) -> usize {
        self.data.nrows()
    }

    pub fn subcarriers(&self) -> usize {
        self.data.ncols()
    }

    /// Squared Frobenius norm.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

struct Path {
    gain: Complex64,
    length: f64,
    /// Arrival direction at the anchor, radians.
    angle: f64,
}

/// ULA response `exp(j 2 pi d m sin(theta - boresight))`.
fn steering(anchor: &AnchorGeometry, angle: f64) -> Vec<Complex64> {
    let phase_step = 2.0 * PI * anchor.array.spacing * (angle - anchor.boresight).sin();
    (0..anchor.array.elements)
        .map(|m| Complex64::from_polar(1.0, phase_step * m as f64))
        .collect()
}

fn paths(env: &Environment, anchor_index: usize, ue: Point2) -> Vec<Path> {
    let anchor = &env.anchors[anchor_index];
    let mut phases = rng::keyed(env.seed, &[rng::domain::PATH_PHASE, anchor_index as u64]);
    let mut next_phase = || Complex64::from_polar(1.0, phases.random_range(0.0..2.0 * PI));

    let mut out = Vec::with_capacity(env.scatterers.len() + 1);
    // The direct-path phase is drawn even when blocked so scatterer phases
    // do not shift with LOS state.
    let direct_phase = next_phase();
    if !anchor.los_blocked_at(ue) {
        let length = anchor.position.distance(ue).max(MIN_PATH_LENGTH);
        out.push(Path {
            gain: direct_phase / length,
            length,
            angle: anchor.position.bearing_to(ue),
        });
    }
    for s in &env.scatterers {
        let phase = next_phase();
        let length = (ue.distance(s.position) + s.position.distance(anchor.position)).max(MIN_PATH_LENGTH);
        let reflectivity = Complex64::new(s.reflectivity[0], s.reflectivity[1]);
        out.push(Path {
            gain: reflectivity * phase / length,
            length,
            angle: anchor.position.bearing_to(s.position),
        });
    }
    out
}

/// Synthesizes the CSI between a UE at `ue` and anchor `anchor_index`
/// (zero-based).
///
/// The result is a pure function of the environment (including its seed),
/// the anchor and the UE position.
pub fn synth_channel(env: &Environment, anchor_index: usize, ue: Point2) -> Result<CsiTensor> {
    if anchor_index >= env.anchors.len() {
        return Err(Error::domain(format!("no anchor with index {anchor_index}")));
    }
    if !env.bounds.contains(ue) {
        return Err(Error::domain(format!(
            "UE position ({}, {}) outside area bounds",
            ue.x, ue.y
        )));
    }
    let anchor = &env.anchors[anchor_index];
    let n_r = anchor.array.elements;
    let n_c = env.subcarriers;
    let df = env.subcarrier_spacing();

    let mut data = Array2::<Complex64>::zeros((n_r, n_c));
    for path in paths(env, anchor_index, ue) {
        let a = steering(anchor, path.angle);
        let ramp = -2.0 * PI * df * path.length / SPEED_OF_LIGHT;
        let phasors: Vec<Complex64> = (0..n_c)
            .map(|k| path.gain * Complex64::from_polar(1.0, ramp * k as f64))
            .collect();
        for (m, am) in a.iter().enumerate() {
            for (k, pk) in phasors.iter().enumerate() {
                data[[m, k]] += am * pk;
            }
        }
    }
    Ok(CsiTensor::new(AnchorId::from_index(anchor_index), data))
}
