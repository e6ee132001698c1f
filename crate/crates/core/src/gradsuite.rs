//! Central-difference gradient suites over every primitive, every composite
//! block and a reduced full model, shared by the tests and the CLI.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{grad_check_sampled, ConvSpec, GradCheckReport, Tape, Var, DEFAULT_STEP};
use crate::error::Result;
use crate::network::attention;
use crate::network::blocks;
use crate::network::params::{Init, Layout};
use crate::network::{model_forward, Forward, Mode, SegNetConfig, SegNetParams};
use crate::tensor::Tensor;

pub const PRIMITIVE_TOLERANCE: f64 = 1e-5;
pub const BLOCK_TOLERANCE: f64 = 1e-5;
pub const MODEL_TOLERANCE: f64 = 1e-4;

/// Outcome of one checked function over all seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteEntry {
    pub name: String,
    pub seeds: usize,
    pub probes: usize,
    pub kinks: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl SuiteEntry {
    fn new(name: &str, tolerance: f64) -> Self {
        SuiteEntry {
            name: name.to_string(),
            seeds: 0,
            probes: 0,
            kinks: 0,
            max_rel_error: 0.0,
            tolerance,
        }
    }

    fn absorb(&mut self, r: &GradCheckReport) {
        self.probes += r.probes;
        self.kinks += r.kinks;
        self.max_rel_error = self.max_rel_error.max(r.max_rel_error);
    }

    pub fn passed(&self) -> bool {
        self.probes > 0 && self.max_rel_error < self.tolerance
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `sum(v ⊙ R)` for a fixed random `R`, turning any output into a scalar
/// with a generic upstream gradient.
pub fn project(t: &mut Tape<f64>, v: Var, seed: u64) -> Result<Var> {
    let w = t.constant(Tensor::randn(t.shape(v).to_vec(), 1.0, &mut rng(seed ^ 0xfeed)));
    let p = t.mul(v, w)?;
    Ok(t.sum(p))
}

type Probe<'a> = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + 'a>;

/// Every differentiable primitive on randomized small shapes.
pub fn primitive_suite(seeds: usize, probes: usize) -> Result<Vec<SuiteEntry>> {
    let mut entries: BTreeMap<&'static str, SuiteEntry> = BTreeMap::new();
    let mut order = Vec::new();
    for seed in 0..seeds as u64 {
        let mut r = rng(seed + 1000);
        let mut cases: Vec<(&'static str, Probe, Vec<Tensor<f64>>)> = Vec::new();
        let a = Tensor::randn(vec![3, 4], 1.0, &mut r);
        let b = Tensor::randn(vec![3, 4], 1.0, &mut r);
        let m = Tensor::randn(vec![4, 5], 1.0, &mut r);
        let s = Tensor::randn(vec![1], 1.0, &mut r);
        let ab = vec![a.clone(), b.clone()];
        cases.push(("add", Box::new(move |t, v| { let o = t.add(v[0], v[1])?; project(t, o, seed) }), ab.clone()));
        cases.push(("sub", Box::new(move |t, v| { let o = t.sub(v[0], v[1])?; project(t, o, seed) }), ab.clone()));
        cases.push(("mul", Box::new(move |t, v| { let o = t.mul(v[0], v[1])?; project(t, o, seed) }), ab.clone()));
        cases.push(("scale", Box::new(move |t, v| { let o = t.scale(v[0], -1.7); project(t, o, seed) }), vec![a.clone()]));
        cases.push(("scale_by", Box::new(move |t, v| { let o = t.scale_by(v[0], v[1])?; project(t, o, seed) }), vec![a.clone(), s]));
        cases.push(("relu", Box::new(move |t, v| { let o = t.relu(v[0]); project(t, o, seed) }), vec![a.clone()]));
        cases.push(("matmul", Box::new(move |t, v| { let o = t.matmul(v[0], v[1])?; project(t, o, seed) }), vec![a.clone(), m]));
        cases.push(("transpose", Box::new(move |t, v| { let o = t.transpose(v[0])?; project(t, o, seed) }), vec![a.clone()]));
        cases.push(("reshape", Box::new(move |t, v| { let o = t.reshape(v[0], &[2, 6])?; project(t, o, seed) }), vec![a.clone()]));
        cases.push(("softmax", Box::new(move |t, v| { let o = t.softmax(v[0], 1)?; project(t, o, seed) }), vec![a.clone()]));
        cases.push(("softmax_axis0", Box::new(move |t, v| { let o = t.softmax(v[0], 0)?; project(t, o, seed) }), vec![a.clone()]));
        cases.push(("concat", Box::new(move |t, v| { let o = t.concat(&[v[0], v[1]], 1)?; project(t, o, seed) }), ab));
        cases.push(("narrow", Box::new(move |t, v| { let o = t.narrow(v[0], 1, 1, 2)?; project(t, o, seed) }), vec![a.clone()]));
        cases.push(("sum", Box::new(move |t, v| { let o = t.mul(v[0], v[0])?; Ok(t.sum(o)) }), vec![a.clone()]));
        cases.push(("mean", Box::new(move |t, v| Ok(t.mean(v[0]))), vec![a]));

        let x = Tensor::randn(vec![2, 3, 3, 2, 2], 1.0, &mut r);
        let gam = Tensor::rand_uniform(vec![3], 0.5, 1.5, &mut r);
        let bet = Tensor::randn(vec![3], 1.0, &mut r);
        let bn_inputs = vec![x, gam, bet];
        cases.push((
            "batch_norm_train",
            Box::new(move |t, v| { let (o, _) = t.batch_norm_train(v[0], v[1], v[2], 1e-5)?; project(t, o, seed) }),
            bn_inputs.clone(),
        ));
        cases.push((
            "batch_norm_eval",
            Box::new(move |t, v| {
                let o = t.batch_norm_eval(v[0], v[1], v[2], &[0.1, -0.2, 0.3], &[0.9, 1.1, 1.3], 1e-5)?;
                project(t, o, seed)
            }),
            bn_inputs,
        ));
        let targets: Vec<usize> = (0..8).map(|i| (i + seed as usize) % 3).collect();
        let logits = Tensor::randn(vec![2, 3, 2, 2, 1], 1.0, &mut r);
        cases.push(("cross_entropy", Box::new(move |t, v| t.cross_entropy(v[0], &targets)), vec![logits]));

        for (name, spec) in [
            ("conv3d", ConvSpec::new(3, 1, 1, 1)),
            ("conv3d_dilated", ConvSpec::new(3, 1, 2, 2)),
            ("conv3d_strided", ConvSpec::new(3, 2, 1, 1)),
            ("conv3d_pointwise_s2", ConvSpec::new(1, 2, 0, 1)),
        ] {
            let x = Tensor::randn(vec![2, 2, 4, 4, 4], 1.0, &mut r);
            let k = spec.kernel;
            let w = Tensor::randn(vec![3, 2, k, k, k], 0.5, &mut r);
            let bias = Tensor::randn(vec![3], 1.0, &mut r);
            cases.push((name, Box::new(move |t, v| { let o = t.conv3d(v[0], v[1], Some(v[2]), spec)?; project(t, o, seed) }), vec![x, w, bias]));
        }
        let x = Tensor::randn(vec![1, 3, 2, 3, 2], 1.0, &mut r);
        let w = Tensor::randn(vec![3, 2, 2, 2, 2], 0.5, &mut r);
        let bias = Tensor::randn(vec![2], 1.0, &mut r);
        cases.push((
            "conv_transpose3d",
            Box::new(move |t, v| {
                let o = t.conv_transpose3d(v[0], v[1], Some(v[2]), ConvSpec::new(2, 2, 0, 1))?;
                project(t, o, seed)
            }),
            vec![x, w, bias],
        ));

        for (name, f, inputs) in cases {
            let report = grad_check_sampled(f, &inputs, DEFAULT_STEP, probes, &mut rng(seed))?;
            let e = entries.entry(name).or_insert_with(|| {
                order.push(name);
                SuiteEntry::new(name, PRIMITIVE_TOLERANCE)
            });
            e.seeds += 1;
            e.absorb(&report);
        }
    }
    Ok(order.into_iter().map(|n| entries.remove(n).unwrap()).collect())
}

/// Random values for every declared tensor: He-scaled weights, small random
/// biases and shifts, gains near 1, nonzero attention scales, and positive
/// running variances.
pub fn randomized_params(layout: &Layout, seed: u64) -> SegNetParams<f64> {
    let mut r = rng(seed);
    let mut params = BTreeMap::new();
    for p in &layout.params {
        let shape = p.shape.clone();
        let t = match p.init {
            Init::He { fan_in, .. } => Tensor::randn(shape, (2.0 / fan_in as f64).sqrt(), &mut r),
            Init::Ones => Tensor::randn(shape, 0.2, &mut r).map(|v| 1.0 + v),
            Init::Zeros if p.name.ends_with(".gamma") && p.shape == [1] => Tensor::rand_uniform(shape, 0.3, 1.0, &mut r),
            Init::Zeros => Tensor::randn(shape, 0.1, &mut r),
        };
        params.insert(p.name.clone(), t);
    }
    let mut buffers = BTreeMap::new();
    for b in &layout.buffers {
        let t = if b.name.ends_with("running_var") {
            Tensor::rand_uniform(b.shape.clone(), 0.5, 1.5, &mut r)
        } else {
            Tensor::randn(b.shape.clone(), 0.1, &mut r)
        };
        buffers.insert(b.name.clone(), t);
    }
    SegNetParams { params, buffers }
}

/// Gradient check of `body` with respect to its input and every parameter
/// declared in `layout`.
fn check_forward<F>(
    layout: &Layout,
    body: F,
    input_shape: &[usize],
    seed: u64,
    probes: usize,
    mode: Mode,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Forward<'_, f64>, Var) -> Result<Var>,
{
    let params = randomized_params(layout, seed);
    let names: Vec<String> = layout.params.iter().map(|p| p.name.clone()).collect();
    let mut inputs = vec![Tensor::randn(input_shape.to_vec(), 1.0, &mut rng(seed ^ 0x5eed))];
    inputs.extend(names.iter().map(|n| params.params[n].clone()));
    let f = |t: &mut Tape<f64>, v: &[Var]| -> Result<Var> {
        let bindings = names.iter().cloned().zip(v[1..].iter().copied()).collect();
        let mut fw = Forward::with_bindings(std::mem::take(t), &params, bindings, mode, 1e-5, 0.1);
        let y = body(&mut fw, v[0]);
        *t = fw.into_tape();
        let y = y?;
        project(t, y, seed)
    };
    grad_check_sampled(f, &inputs, DEFAULT_STEP, probes, &mut rng(seed))
}

fn run_block<F>(name: &str, layout: &Layout, body: F, shape: &[usize], seeds: usize, probes: usize) -> Result<SuiteEntry>
where
    F: Fn(&mut Forward<'_, f64>, Var) -> Result<Var>,
{
    let mut e = SuiteEntry::new(name, BLOCK_TOLERANCE);
    for seed in 0..seeds as u64 {
        e.absorb(&check_forward(layout, &body, shape, seed, probes, Mode::Train)?);
        e.seeds += 1;
    }
    Ok(e)
}

/// Dila-block, DCP downsampling, both attention branches and their fusion.
pub fn block_suite(seeds: usize, probes: usize) -> Result<Vec<SuiteEntry>> {
    let mut out = Vec::new();

    let mut l = Layout::default();
    blocks::declare_dila_block(&mut l, "b", 4, 2);
    out.push(run_block("dila_block", &l, |f, x| blocks::dila_block(f, "b", x), &[2, 4, 6, 6, 6], seeds, probes)?);

    let mut l = Layout::default();
    blocks::declare_dcp_down(&mut l, "b", 4, 8);
    out.push(run_block("dcp_down", &l, |f, x| blocks::dcp_down(f, "b", x), &[2, 4, 6, 6, 6], seeds, probes)?);

    let mut l = Layout::default();
    attention::declare_position_attention(&mut l, "b", 8);
    out.push(run_block(
        "position_attention",
        &l,
        |f, x| attention::position_attention(f, "b", x),
        &[1, 8, 3, 3, 3],
        seeds,
        probes,
    )?);

    let mut l = Layout::default();
    attention::declare_channel_attention(&mut l, "b");
    out.push(run_block(
        "channel_attention",
        &l,
        |f, x| attention::channel_attention(f, "b", x),
        &[1, 4, 3, 2, 2],
        seeds,
        probes,
    )?);

    let mut l = Layout::default();
    attention::declare_dual_attention(&mut l, "b", 8);
    out.push(run_block(
        "dual_attention",
        &l,
        |f, x| attention::dual_attention(f, "b", x),
        &[1, 8, 4, 4, 4],
        seeds,
        probes,
    )?);
    Ok(out)
}

/// The reduced configuration used for the whole-model check.
pub fn reduced_model_config() -> SegNetConfig {
    SegNetConfig::reduced(2, 4)
}

/// Whole model on a `(1, 2, 8, 8, 8)` input.
pub fn full_model_check(seeds: usize, probes: usize) -> Result<SuiteEntry> {
    let cfg = reduced_model_config();
    let lay = crate::network::layout(&cfg);
    let mut e = SuiteEntry::new("full_model", MODEL_TOLERANCE);
    for seed in 0..seeds as u64 {
        let r = check_forward(&lay, |f, x| model_forward(f, &cfg, x), &[1, 2, 8, 8, 8], seed, probes, Mode::Train)?;
        e.absorb(&r);
        e.seeds += 1;
    }
    Ok(e)
}
