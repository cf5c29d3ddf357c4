use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use super::synth::{CsiDomain, CsiTensor};
use crate::{Error, Result};

/// Applies a unitary DFT in `direction` along `axis`, in place.
fn dft_along(data: &mut Array2<Complex64>, axis: Axis, direction: FftDirection) {
    let n = data.len_of(axis);
    let fft: std::sync::Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft(n, direction);
    let scale = 1.0 / (n as f64).sqrt();
    let mut buf = vec![Complex64::default(); n];
    for mut lane in data.lanes_mut(axis) {
        buf.iter_mut().zip(lane.iter()).for_each(|(b, v)| *b = *v);
        fft.process(&mut buf);
        lane.iter_mut().zip(&buf).for_each(|(v, b)| *v = b * scale);
    }
}

/// Antenna-subcarrier to angle-delay: forward DFT across antennas, inverse
/// DFT across subcarriers, both unitary.
pub fn to_angle_delay(csi: &CsiTensor) -> CsiTensor {
    let mut data = csi.data.clone();
    dft_along(&mut data, Axis(0), FftDirection::Forward);
    dft_along(&mut data, Axis(1), FftDirection::Inverse);
    CsiTensor {
        anchor: csi.anchor,
        domain: CsiDomain::AngleDelay,
        data,
    }
}

/// Inverse of [`to_angle_delay`].
pub fn from_angle_delay(ad: &CsiTensor) -> CsiTensor {
    let mut data = ad.data.clone();
    dft_along(&mut data, Axis(1), FftDirection::Forward);
    dft_along(&mut data, Axis(0), FftDirection::Inverse);
    CsiTensor {
        anchor: ad.anchor,
        domain: CsiDomain::AntennaSubcarrier,
        data,
    }
}

/// Attenuates the strongest angle-delay bin and its `window x window`
/// neighbourhood (clipped at the borders) by `atten_db`, then transforms
/// back to the antenna-subcarrier domain.
pub fn attenuate_strongest(csi: &CsiTensor, atten_db: f64, window: usize) -> Result<CsiTensor> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::domain(format!(
            "attenuation window must be odd and >= 1, got {window}"
        )));
    }
    if !(atten_db > 0.0 && atten_db.is_finite()) {
        return Err(Error::domain(format!(
            "attenuation must be positive, got {atten_db} dB"
        )));
    }
    if csi.domain != CsiDomain::AntennaSubcarrier {
        return Err(Error::domain("attenuation expects antenna-subcarrier CSI"));
    }
    let mut ad = to_angle_delay(csi);
    let Some(((row, col), peak)) = ad.data.indexed_iter().map(|(idx, c)| (idx, c.norm_sqr())).fold(
        None,
        |best: Option<((usize, usize), f64)>, cur| match best {
            Some(b) if b.1 >= cur.1 => Some(b),
            _ => Some(cur),
        },
    ) else {
        return Ok(csi.clone());
    };
    if peak == 0.0 {
        return Ok(csi.clone());
    }

    let factor = 10f64.powf(-atten_db / 20.0);
    let half = window / 2;
    let (rows, cols) = ad.data.dim();
    for r in row.saturating_sub(half)..(row + half + 1).min(rows) {
        for c in col.saturating_sub(half)..(col + half + 1).min(cols) {
            ad.data[[r, c]] *= factor;
        }
    }
    Ok(from_angle_delay(&ad))
}
