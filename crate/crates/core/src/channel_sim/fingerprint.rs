use serde::{Deserialize, Serialize};

use super::synth::CsiTensor;
use crate::{AnchorId, Error, Result};

/// Min-max extrema of one anchor's training CSI, shared by the real and
/// imaginary planes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: f64,
    pub max: f64,
}

impl NormStats {
    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.max <= self.min {
            return Err(Error::Numeric(format!(
                "degenerate normalization range [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

/// Extrema over every real and imaginary entry of `csis`.
pub fn compute_norm_stats<'a>(csis: impl IntoIterator<Item = &'a CsiTensor>) -> Result<NormStats> {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for csi in csis {
        for c in csi.data.iter() {
            min = min.min(c.re).min(c.im);
            max = max.max(c.re).max(c.im);
        }
    }
    let stats = NormStats { min, max };
    stats.validate()?;
    Ok(stats)
}

/// Real-valued network input: antennas x subcarriers x {re, im}, flattened
/// antenna-major, subcarrier-minor, plane-last. Every value lies in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Fingerprint {
    pub anchor: AnchorId,
    pub antennas: usize,
    pub subcarriers: usize,
    pub values: Vec<f64>,
}

impl Fingerprint {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, antenna: usize, subcarrier: usize, plane: usize) -> f64 {
        self.values[(antenna * self.subcarriers + subcarrier) * 2 + plane]
    }
}

/// Stacks real and imaginary planes and min-max normalizes with training
/// extrema, clamping to [0, 1].
pub fn to_fingerprint(csi: &CsiTensor, norm: &NormStats) -> Result<Fingerprint> {
    norm.validate()?;
    let scale = 1.0 / (norm.max - norm.min);
    let squash = |v: f64| ((v - norm.min) * scale).clamp(0.0, 1.0);
    let (antennas, subcarriers) = csi.data.dim();
    let mut values = Vec::with_capacity(antennas * subcarriers * 2);
    for row in csi.data.rows() {
        for c in row {
            values.push(squash(c.re));
            values.push(squash(c.im));
        }
    }
    Ok(Fingerprint {
        anchor: csi.anchor,
        antennas,
        subcarriers,
        values,
    })
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;
    use num_complex::Complex64;
    use rand::Rng;

    use super::*;

    fn tensor(f: impl FnMut((usize, usize)) -> Complex64) -> CsiTensor {
        CsiTensor::new(AnchorId(2), Array2::from_shape_fn((3, 5), f))
    }

    #[test]
    fn purely_real_tensor_has_constant_imaginary_plane() {
        let csi = tensor(|(r, c)| Complex64::new(r as f64 - c as f64, 0.0));
        let norm = NormStats { min: -4.0, max: 2.0 };
        let fp = to_fingerprint(&csi, &norm).unwrap();
        let zero_image = (0.0 - norm.min) / (norm.max - norm.min);
        for r in 0..3 {
            for c in 0..5 {
                assert_eq!(fp.at(r, c, 1), zero_image);
            }
        }
    }

    #[test]
    fn training_max_maps_to_one() {
        let csi = tensor(|_| Complex64::new(3.0, 3.0));
        let fp = to_fingerprint(&csi, &NormStats { min: -1.0, max: 3.0 }).unwrap();
        assert!(fp.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn matches_direct_formula() {
        let mut r = crate::rng::keyed(5, &[]);
        let csi = tensor(|_| Complex64::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)));
        let norm = compute_norm_stats([&csi]).unwrap();
        let fp = to_fingerprint(&csi, &norm).unwrap();
        for a in 0..3 {
            for s in 0..5 {
                let h = csi.data[[a, s]];
                let re = (h.re - norm.min) / (norm.max - norm.min);
                let im = (h.im - norm.min) / (norm.max - norm.min);
                assert!((fp.at(a, s, 0) - re).abs() < 1e-12);
                assert!((fp.at(a, s, 1) - im).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_range_values_are_clamped() {
        let csi = tensor(|(r, _)| Complex64::new(10.0 * r as f64 - 10.0, 0.0));
        let fp = to_fingerprint(&csi, &NormStats { min: -1.0, max: 1.0 }).unwrap();
        assert!(fp.values.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(fp.at(0, 0, 0), 0.0);
        assert_eq!(fp.at(2, 0, 0), 1.0);
    }

    #[test]
    fn degenerate_stats_are_rejected() {
        let csi = tensor(|_| Complex64::new(1.0, 1.0));
        assert!(compute_norm_stats([&csi]).is_err());
        assert!(to_fingerprint(&csi, &NormStats { min: 1.0, max: 1.0 }).is_err());
    }
}
