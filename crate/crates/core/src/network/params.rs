use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use std::path::Path;

use super::archive::Archive;
use super::{blocks, SegNetConfig};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const HEAD_GAIN: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Normal with standard deviation `gain · sqrt(2 / fan_in)`.
    He { fan_in: usize, gain: f64 },
    Zeros,
    Ones,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Ordered declaration of every learnable tensor and running buffer.
#[derive(Clone, Debug, Default)]
pub struct Layout {
    pub params: Vec<ParamSpec>,
    pub buffers: Vec<ParamSpec>,
}

impl Layout {
    fn param(&mut self, name: String, shape: Vec<usize>, init: Init) {
        self.params.push(ParamSpec { name, shape, init });
    }

    /// Convolution weight `[cout, cin, k, k, k]` plus bias `[cout]`.
    pub fn conv(&mut self, prefix: &str, cin: usize, cout: usize, k: usize) {
        self.param(format!("{prefix}.weight"), vec![cout, cin, k, k, k], Init::He { fan_in: cin * k * k * k, gain: 1.0 });
        self.param(format!("{prefix}.bias"), vec![cout], Init::Zeros);
    }

    /// Pointwise classifier with a damped He draw, so initial logits are
    /// close to uniform.
    pub fn classifier(&mut self, prefix: &str, cin: usize, classes: usize) {
        self.param(
            format!("{prefix}.weight"),
            vec![classes, cin, 1, 1, 1],
            Init::He { fan_in: cin, gain: HEAD_GAIN },
        );
        self.param(format!("{prefix}.bias"), vec![classes], Init::Zeros);
    }

    /// Transposed convolution weight `[cin, cout, k, k, k]` plus bias.
    /// Each output voxel of a stride-`s` transpose sees `cin · ceil(k/s)^3` taps.
    pub fn deconv(&mut self, prefix: &str, cin: usize, cout: usize, k: usize, stride: usize) {
        let per_axis = k.div_ceil(stride);
        self.param(
            format!("{prefix}.weight"),
            vec![cin, cout, k, k, k],
            Init::He { fan_in: cin * per_axis.pow(3), gain: 1.0 },
        );
        self.param(format!("{prefix}.bias"), vec![cout], Init::Zeros);
    }

    pub fn batch_norm(&mut self, prefix: &str, c: usize) {
        self.param(format!("{prefix}.gamma"), vec![c], Init::Ones);
        self.param(format!("{prefix}.beta"), vec![c], Init::Zeros);
        self.buffers.push(ParamSpec {
            name: format!("{prefix}.running_mean"),
            shape: vec![c],
            init: Init::Zeros,
        });
        self.buffers.push(ParamSpec {
            name: format!("{prefix}.running_var"),
            shape: vec![c],
            init: Init::Ones,
        });
    }

    pub fn scalar_zero(&mut self, name: String) {
        self.param(name, vec![1], Init::Zeros);
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.shape.iter().product::<usize>()).sum()
    }
}

/// Every learnable tensor of a model by hierarchical name, plus the
/// batch-norm running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct SegNetParams<T> {
    pub params: BTreeMap<String, Tensor<T>>,
    pub buffers: BTreeMap<String, Tensor<T>>,
}

impl<T: Element> SegNetParams<T> {
    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("no parameter named `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::Invalid(format!("no parameter named `{name}`")))
    }

    pub fn buffer(&self, name: &str) -> Result<&Tensor<T>> {
        self.buffers
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("no buffer named `{name}`")))
    }

    pub fn count(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn cast<U: Element>(&self) -> SegNetParams<U> {
        SegNetParams {
            params: self.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
            buffers: self.buffers.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }
}

pub fn layout(config: &SegNetConfig) -> Layout {
    let mut l = Layout::default();
    blocks::declare_model(&mut l, config);
    l
}

/// He-normal convolution weights, zero biases, unit norm gains, zero
/// attention gains; deterministic per seed.
pub fn init_params<T: Element>(config: &SegNetConfig, seed: u64) -> SegNetParams<T> {
    let lay = layout(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let build = |spec: &ParamSpec, rng: &mut ChaCha8Rng| match spec.init {
        Init::He { fan_in, gain } => Tensor::randn(spec.shape.clone(), gain * (2.0 / fan_in as f64).sqrt(), rng),
        Init::Zeros => Tensor::zeros(spec.shape.clone()),
        Init::Ones => Tensor::ones(spec.shape.clone()),
    };
    let params = lay.params.iter().map(|s| (s.name.clone(), build(s, &mut rng))).collect();
    let buffers = lay.buffers.iter().map(|s| (s.name.clone(), build(s, &mut rng))).collect();
    SegNetParams { params, buffers }
}

const PARAM_PREFIX: &str = "param/";
const BUFFER_PREFIX: &str = "buffer/";

impl SegNetParams<f32> {
    /// Appends every parameter and buffer as `param/<name>` and
    /// `buffer/<name>` tensors.
    pub fn write_into(&self, archive: &mut Archive) {
        for (prefix, map) in [(PARAM_PREFIX, &self.params), (BUFFER_PREFIX, &self.buffers)] {
            for (name, t) in map {
                archive.push_tensor(format!("{prefix}{name}"), t.shape().to_vec(), t.data().to_vec());
            }
        }
    }

    /// Reads exactly the tensors `layout` declares, checking shapes.
    pub fn read_from(archive: &Archive, layout: &Layout) -> Result<Self> {
        let fetch = |prefix: &str, spec: &ParamSpec| -> Result<(String, Tensor<f32>)> {
            let key = format!("{prefix}{}", spec.name);
            let t = archive
                .tensor(&key)
                .ok_or_else(|| Error::Invalid(format!("archive lacks tensor `{key}`")))?;
            if t.shape != spec.shape {
                return Err(Error::shape(
                    "read_params",
                    format!("`{key}` has shape {:?}, layout expects {:?}", t.shape, spec.shape),
                ));
            }
            Ok((spec.name.clone(), Tensor::new(t.shape.clone(), t.data.clone())?))
        };
        let params = layout.params.iter().map(|s| fetch(PARAM_PREFIX, s)).collect::<Result<_>>()?;
        let buffers = layout.buffers.iter().map(|s| fetch(BUFFER_PREFIX, s)).collect::<Result<_>>()?;
        let expected = layout.params.len() + layout.buffers.len();
        let stored = archive
            .tensors
            .iter()
            .filter(|t| t.name.starts_with(PARAM_PREFIX) || t.name.starts_with(BUFFER_PREFIX))
            .count();
        if stored != expected {
            return Err(Error::Invalid(format!(
                "archive holds {stored} model tensors, configuration declares {expected}"
            )));
        }
        Ok(SegNetParams { params, buffers })
    }
}

/// Writes the parameters with the configuration recorded as metadata.
pub fn save_params(path: &Path, config: &SegNetConfig, params: &SegNetParams<f32>) -> Result<()> {
    let mut a = Archive::default();
    a.push_meta("kind", "params");
    a.push_meta("config", config.describe());
    params.write_into(&mut a);
    a.save(path)
}

/// Loads parameters saved for an identical configuration.
pub fn load_params(path: &Path, config: &SegNetConfig) -> Result<SegNetParams<f32>> {
    let a = Archive::load(path)?;
    let stored = a.meta("config")?;
    if stored != config.describe() {
        return Err(Error::ConfigMismatch {
            expected: config.describe(),
            found: stored.to_string(),
        });
    }
    SegNetParams::read_from(&a, &layout(config))
}
