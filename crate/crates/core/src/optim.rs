//! Adam with coupled L2 weight decay (`g <- g + wd * p`).

use crate::autodiff::ParamSet;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    step: u64,
    m: ParamSet,
    v: ParamSet,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        Self {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. Parameters are left untouched when any
/// gradient is non-finite.
pub fn adam_step(params: &mut ParamSet, grads: &ParamSet, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    for (name, p) in params.iter() {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::Contract(format!("no gradient for `{name}`")))?;
        let m = state
            .m
            .get(name)
            .ok_or_else(|| Error::Contract(format!("no optimizer state for `{name}`")))?;
        if g.shape() != p.shape() || m.shape() != p.shape() {
            return Err(Error::dim("adam_step", format!("shape mismatch for `{name}`")));
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(name.to_string()));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (name, p) in params.iter_mut() {
        let g = grads.get(name).expect("checked");
        let m = state.m.get_mut(name).expect("checked");
        let v = state.v.get_mut(name).expect("checked");
        for k in 0..p.len() {
            let pk = p.data()[k];
            let gk = g.data()[k] + cfg.weight_decay * pk;
            let mk = cfg.beta1 * m.data()[k] + (1.0 - cfg.beta1) * gk;
            let vk = cfg.beta2 * v.data()[k] + (1.0 - cfg.beta2) * gk * gk;
            m.data_mut()[k] = mk;
            v.data_mut()[k] = vk;
            let m_hat = mk / bc1;
            let v_hat = vk / bc2;
            p.data_mut()[k] = pk - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn one(name: &str, values: &[f64]) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert(name, Tensor::new(1, values.len(), values.to_vec()).unwrap());
        p
    }

    #[test]
    fn zero_grad_no_decay_is_noop() {
        let mut p = one("w", &[1.0, -2.0]);
        let g = p.zeros_like();
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &AdamConfig::new(0.01, 0.0)).unwrap();
        assert_eq!(p, one("w", &[1.0, -2.0]));
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = one("w", &[1.0, 1.0, 1.0]);
        let g = one("w", &[3.0, -0.5, 1e-3]);
        let mut s = AdamState::new(&p);
        let cfg = AdamConfig::new(0.01, 0.0);
        adam_step(&mut p, &g, &mut s, &cfg).unwrap();
        for (k, &gk) in g.get("w").unwrap().data().iter().enumerate() {
            // closed form: m_hat = g, v_hat = g^2
            let expected = 1.0 - 0.01 * gk / (gk.abs() + 1e-8);
            assert!((p.get("w").unwrap().data()[k] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn weight_decay_is_added_to_gradient() {
        let mut p = one("w", &[2.0]);
        let g = one("w", &[0.0]);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &AdamConfig::new(0.1, 0.5)).unwrap();
        // effective gradient 1.0 > 0 so the parameter shrinks by ~lr
        assert!((p.get("w").unwrap().data()[0] - 1.9).abs() < 1e-6);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = one("enc.w1", &[1.0]);
        let g = one("enc.w1", &[f64::NAN]);
        let mut s = AdamState::new(&p);
        match adam_step(&mut p, &g, &mut s, &AdamConfig::new(0.01, 0.0)) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "enc.w1"),
            other => panic!("{other:?}"),
        }
        assert_eq!(s.step(), 0);
    }
}
