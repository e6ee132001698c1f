use std::collections::BTreeMap;

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::network::SegNetParams;
use crate::tensor::{Element, Tensor};

/// First and second moment estimates per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: BTreeMap<String, Tensor<T>>,
    pub v: BTreeMap<String, Tensor<T>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<T: Element> AdamState<T> {
    pub fn new(params: &SegNetParams<T>, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros = || {
            params
                .params
                .iter()
                .map(|(k, p)| (k.clone(), Tensor::zeros(p.shape().to_vec())))
                .collect()
        };
        AdamState {
            m: zeros(),
            v: zeros(),
            t: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn for_config(params: &SegNetParams<T>, cfg: &TrainConfig) -> Self {
        Self::new(params, cfg.beta1, cfg.beta2, cfg.epsilon)
    }
}

/// One bias-corrected Adam step with decoupled weight decay
/// `p ← p − lr·λ·p` applied before the Adam update. Parameters without a
/// gradient are updated as if their gradient were zero.
pub fn adam_step<T: Element>(
    params: &mut SegNetParams<T>,
    grads: &BTreeMap<String, Tensor<T>>,
    state: &mut AdamState<T>,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    for (name, g) in grads {
        let p = params.get(name)?;
        if p.shape() != g.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("gradient of `{name}` has shape {:?}, parameter {:?}", g.shape(), p.shape()),
            ));
        }
    }
    for name in params.params.keys() {
        if !state.m.contains_key(name) || state.m[name].shape() != params.params[name].shape() {
            return Err(Error::shape("adam_step", format!("optimizer state does not match `{name}`")));
        }
    }
    state.t += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (name, p) in params.params.iter_mut() {
        let m = state.m.get_mut(name).expect("checked above").data_mut();
        let v = state.v.get_mut(name).expect("checked above").data_mut();
        let g = grads.get(name).map(Tensor::data);
        for (i, pi) in p.data_mut().iter_mut().enumerate() {
            let gi = g.map_or(0.0, |g| g[i].as_f64());
            let mut x = pi.as_f64();
            x -= lr * weight_decay * x;
            let mi = b1 * m[i].as_f64() + (1.0 - b1) * gi;
            let vi = b2 * v[i].as_f64() + (1.0 - b2) * gi * gi;
            m[i] = T::from_f64(mi);
            v[i] = T::from_f64(vi);
            x -= lr * (mi / c1) / ((vi / c2).sqrt() + eps);
            *pi = T::from_f64(x);
        }
    }
    Ok(())
}
