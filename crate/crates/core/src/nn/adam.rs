use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::domain(format!(
            "adam: {} parameters, {} gradients, {} moment entries",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient at parameter {i}")));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for ((p, &g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        *p -= state.lr * (*m / c1) / ((*v / c2).sqrt() + state.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2, 1e-3);
        adam_step(&mut p, &[0.0, 0.0], &mut s).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn constant_gradient_descends() {
        let mut p = vec![0.0, 0.0];
        let mut s = AdamState::new(2, 1e-2);
        for _ in 0..100 {
            adam_step(&mut p, &[0.5, -3.0], &mut s).unwrap();
        }
        assert!(p[0] < 0.0 && p[1] > 0.0);
    }

    #[test]
    fn matches_hand_evaluated_formulas() {
        let mut s = AdamState::new(1, 0.01);
        s.m = vec![0.2];
        s.v = vec![0.05];
        s.t = 3;
        let mut p = vec![1.5];
        adam_step(&mut p, &[0.4], &mut s).unwrap();
        let m = 0.9 * 0.2 + 0.1 * 0.4;
        let v = 0.999 * 0.05 + 0.001 * 0.16;
        let m_hat = m / (1.0 - 0.9f64.powi(4));
        let v_hat = v / (1.0 - 0.999f64.powi(4));
        let expected = 1.5 - 0.01 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p[0] - expected).abs() <= 1e-12);
        assert!((s.m[0] - m).abs() <= 1e-15 && (s.v[0] - v).abs() <= 1e-15);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = vec![0.3, 0.1, -0.7];
            let mut s = AdamState::new(3, 1e-3);
            for k in 0..10 {
                let g: Vec<f64> = p.iter().map(|x| x * k as f64 - 0.1).collect();
                adam_step(&mut p, &g, &mut s).unwrap();
            }
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1, 1e-3);
        assert!(matches!(adam_step(&mut p, &[f64::NAN], &mut s), Err(Error::Numeric(_))));
        assert_eq!(s.t, 0);
        assert!(adam_step(&mut p, &[0.0, 1.0], &mut s).is_err());
    }
}
