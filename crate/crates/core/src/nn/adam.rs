use crate::autodiff::Tensor;
use crate::error::{Error, Result};

use super::params::ModelParams;

/// Adam moments and hyper-parameters for one parameter set.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

pub const DEFAULT_LR: f64 = 0.0005;

impl AdamState {
    pub fn new(params: &ModelParams, lr: f64) -> Self {
        let zeros: Vec<Tensor> = params
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update of `params` along `grads` (same names, same order).
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Config(
            "gradients are not aligned with parameters".into(),
        ));
    }
    for ((name, p), (gname, g)) in params.iter().zip(grads.iter()) {
        if name != gname || p.shape() != g.shape() {
            return Err(Error::Config(format!(
                "gradient {gname:?} does not match parameter {name:?}"
            )));
        }
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powf(state.t as f64);
    let c2 = 1.0 - b2.powf(state.t as f64);
    let (lr, eps) = (state.lr, state.eps);
    for (((_, p), (_, g)), (m, v)) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let p = p.data_mut();
        let (m, v) = (m.data_mut(), v.data_mut());
        for (k, &gk) in g.data().iter().enumerate() {
            m[k] = b1 * m[k] + (1.0 - b1) * gk;
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
            let mhat = m[k] / c1;
            let vhat = v[k] / c2;
            p[k] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_params(x: f64) -> ModelParams {
        let mut p = ModelParams::new();
        p.insert("x", Tensor::scalar(x)).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar_params(0.3);
        let mut s = AdamState::new(&p, DEFAULT_LR);
        adam_step(&mut p, &scalar_params(0.0), &mut s).unwrap();
        assert_eq!(p.get("x").unwrap().item(), 0.3);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar_params(0.0);
        let mut s = AdamState::new(&p, DEFAULT_LR);
        adam_step(&mut p, &scalar_params(1.0), &mut s).unwrap();
        let dx = p.get("x").unwrap().item();
        assert!((dx + 0.0005).abs() < 1e-10, "{dx}");
    }

    #[test]
    fn converges_on_a_parabola() {
        let mut p = scalar_params(1.0);
        let mut s = AdamState::new(&p, 0.05);
        for _ in 0..500 {
            let x = p.get("x").unwrap().item();
            adam_step(&mut p, &scalar_params(2.0 * x), &mut s).unwrap();
        }
        assert!(p.get("x").unwrap().item().abs() < 1e-2);
    }

    #[test]
    fn misaligned_gradients_error() {
        let mut p = scalar_params(1.0);
        let mut s = AdamState::new(&p, 0.1);
        let mut g = ModelParams::new();
        g.insert("y", Tensor::scalar(1.0)).unwrap();
        assert!(adam_step(&mut p, &g, &mut s).is_err());
    }
}
