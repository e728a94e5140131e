use std::collections::BTreeMap;

use super::params::round_in_place;
use super::{ParamSet, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }
}

/// One bias-corrected Adam update. `lr_for` maps a parameter name to its
/// learning rate. Every parameter must have a gradient of matching shape.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    lr_for: impl Fn(&str) -> f64,
) -> Result<()> {
    for (name, g) in grads {
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
        let p = params.get(name)?;
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
    }
    let names: Vec<String> = params.names().map(String::from).collect();
    for name in &names {
        if !grads.contains_key(name) {
            return Err(Error::Config(format!("no gradient for parameter `{name}`")));
        }
    }

    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    for name in names {
        let g = &grads[&name];
        let lr = lr_for(&name);
        let p = params.get_mut(&name).expect("checked above");
        let (m, v) = state
            .moments
            .entry(name)
            .or_insert_with(|| (vec![0.0; g.numel()], vec![0.0; g.numel()]));
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mv = beta1 * *mv + (1.0 - beta1) * gv;
            *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        round_in_place(p);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_set(w: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::vector(vec![w])).unwrap();
        p
    }

    fn grad(v: f64) -> BTreeMap<String, Tensor> {
        BTreeMap::from([("w".to_string(), Tensor::vector(vec![v]))])
    }

    #[test]
    fn one_step_descends_quadratic() {
        let mut p = scalar_set(1.0);
        let mut s = AdamState::new(AdamConfig::default());
        adam_step(&mut p, &grad(2.0), &mut s, |_| 0.1).unwrap();
        let w = p.get("w").unwrap().item();
        assert!(w * w < 1.0);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = scalar_set(0.25);
        let mut s = AdamState::new(AdamConfig::default());
        adam_step(&mut p, &grad(0.0), &mut s, |_| 0.1).unwrap();
        assert_eq!(p.get("w").unwrap().item(), 0.25);
        assert_eq!(s.step, 1);
    }

    /// Scalar Adam recurrence on (w - 3)^2, written out independently.
    fn oracle(steps: usize, lr: f64) -> f64 {
        let (mut w, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=steps {
            let g = 2.0 * (w - 3.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32));
            let vh = v / (1.0 - 0.999f64.powi(t as i32));
            w = (w - lr * mh / (vh.sqrt() + 1e-8)) as f32 as f64;
        }
        w
    }

    #[test]
    fn fifty_steps_approach_minimum() {
        let mut p = scalar_set(0.0);
        let mut s = AdamState::new(AdamConfig::default());
        for _ in 0..50 {
            let w = p.get("w").unwrap().item();
            adam_step(&mut p, &grad(2.0 * (w - 3.0)), &mut s, |_| 0.3).unwrap();
        }
        let w = p.get("w").unwrap().item();
        assert_eq!(w, oracle(50, 0.3));
        assert!((w - 3.0).abs() < 0.5, "w = {w}");
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = scalar_set(1.0);
        let mut s = AdamState::new(AdamConfig::default());
        let err = adam_step(&mut p, &grad(f64::NAN), &mut s, |_| 0.1).unwrap_err();
        assert!(err.to_string().contains("`w`"));
    }
}
