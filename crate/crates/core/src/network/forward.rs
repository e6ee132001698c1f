use std::collections::BTreeMap;

use super::SegNetParams;
use crate::autograd::{BatchStats, ConvSpec, Tape, Var};
use crate::error::Result;
use crate::tensor::{Element, Tensor};

/// Batch normalization behaviour.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated afterwards.
    Train,
    /// Running statistics.
    Eval,
}

/// One forward pass of a model over a fresh tape.
///
/// Parameters are registered lazily as tape leaves on first use, so the set of
/// gradients produced is exactly the set of parameters the pass touched.
pub struct Forward<'a, T: Element> {
    pub tape: Tape<T>,
    params: &'a SegNetParams<T>,
    vars: BTreeMap<String, Var>,
    mode: Mode,
    bn_eps: f64,
    bn_momentum: f64,
    track_grads: bool,
    stats: Vec<(String, BatchStats<T>)>,
}

impl<'a, T: Element> Forward<'a, T> {
    pub fn new(params: &'a SegNetParams<T>, mode: Mode, bn_eps: f64, bn_momentum: f64) -> Self {
        Forward {
            tape: Tape::new(),
            params,
            vars: BTreeMap::new(),
            mode,
            bn_eps,
            bn_momentum,
            track_grads: true,
            stats: Vec::new(),
        }
    }

    /// A pass that records no parameter gradients.
    pub fn inference(params: &'a SegNetParams<T>, mode: Mode, bn_eps: f64, bn_momentum: f64) -> Self {
        Forward {
            track_grads: false,
            ..Self::new(params, mode, bn_eps, bn_momentum)
        }
    }

    /// Continues on an existing tape where some parameters are already
    /// recorded as `bindings`; the rest are looked up in `params`.
    pub fn with_bindings(
        tape: Tape<T>,
        params: &'a SegNetParams<T>,
        bindings: BTreeMap<String, Var>,
        mode: Mode,
        bn_eps: f64,
        bn_momentum: f64,
    ) -> Self {
        Forward {
            tape,
            vars: bindings,
            ..Self::new(params, mode, bn_eps, bn_momentum)
        }
    }

    pub fn into_tape(self) -> Tape<T> {
        self.tape
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(v) = self.vars.get(name) {
            return Ok(*v);
        }
        let t = self.params.get(name)?.clone();
        let v = self.tape.leaf(t, self.track_grads);
        self.vars.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.tape.constant(t)
    }

    /// Convolution with `{prefix}.weight` and `{prefix}.bias`.
    pub fn conv(&mut self, prefix: &str, x: Var, spec: ConvSpec) -> Result<Var> {
        let w = self.param(&format!("{prefix}.weight"))?;
        let b = self.param(&format!("{prefix}.bias"))?;
        self.tape.conv3d(x, w, Some(b), spec)
    }

    pub fn deconv(&mut self, prefix: &str, x: Var, spec: ConvSpec) -> Result<Var> {
        let w = self.param(&format!("{prefix}.weight"))?;
        let b = self.param(&format!("{prefix}.bias"))?;
        self.tape.conv_transpose3d(x, w, Some(b), spec)
    }

    pub fn batch_norm(&mut self, prefix: &str, x: Var) -> Result<Var> {
        let g = self.param(&format!("{prefix}.gamma"))?;
        let b = self.param(&format!("{prefix}.beta"))?;
        match self.mode {
            Mode::Train => {
                let (y, stats) = self.tape.batch_norm_train(x, g, b, self.bn_eps)?;
                self.stats.push((prefix.to_string(), stats));
                Ok(y)
            }
            Mode::Eval => {
                let rm = self.params.buffer(&format!("{prefix}.running_mean"))?.data().to_vec();
                let rv = self.params.buffer(&format!("{prefix}.running_var"))?.data().to_vec();
                self.tape.batch_norm_eval(x, g, b, &rm, &rv, self.bn_eps)
            }
        }
    }

    pub fn bn_relu(&mut self, prefix: &str, x: Var) -> Result<Var> {
        let y = self.batch_norm(prefix, x)?;
        Ok(self.tape.relu(y))
    }

    /// Gradients of every registered parameter after `tape.backward`.
    pub fn param_grads(&self) -> BTreeMap<String, Tensor<T>> {
        self.vars
            .iter()
            .filter_map(|(k, v)| self.tape.grad(*v).map(|g| (k.clone(), g)))
            .collect()
    }

    /// Running-statistic updates gathered in training mode:
    /// `r ← (1 − m)·r + m·batch`, the variance unbiased by `n/(n−1)`.
    pub fn running_updates(&self) -> Vec<(String, Vec<T>, Vec<T>)> {
        let m = self.bn_momentum;
        self.stats
            .iter()
            .map(|(prefix, s)| {
                let rm = self.params.buffers[&format!("{prefix}.running_mean")].data();
                let rv = self.params.buffers[&format!("{prefix}.running_var")].data();
                let unbias = if s.count > 1 {
                    s.count as f64 / (s.count - 1) as f64
                } else {
                    1.0
                };
                let mean = rm
                    .iter()
                    .zip(&s.mean)
                    .map(|(&r, &b)| T::from_f64((1.0 - m) * r.as_f64() + m * b.as_f64()))
                    .collect();
                let var = rv
                    .iter()
                    .zip(&s.var)
                    .map(|(&r, &b)| T::from_f64((1.0 - m) * r.as_f64() + m * b.as_f64() * unbias))
                    .collect();
                (prefix.clone(), mean, var)
            })
            .collect()
    }
}

/// Writes running-statistic updates into the parameter set. Each norm layer is
/// expected to run once per pass; repeated runs keep the last update.
pub fn apply_running_updates<T: Element>(params: &mut SegNetParams<T>, updates: Vec<(String, Vec<T>, Vec<T>)>) {
    for (prefix, mean, var) in updates {
        if let Some(t) = params.buffers.get_mut(&format!("{prefix}.running_mean")) {
            t.data_mut().copy_from_slice(&mean);
        }
        if let Some(t) = params.buffers.get_mut(&format!("{prefix}.running_var")) {
            t.data_mut().copy_from_slice(&var);
        }
    }
}
