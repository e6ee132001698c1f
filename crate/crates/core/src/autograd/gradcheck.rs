//! Central-difference verification of analytic gradients (64-bit only).

use rand::seq::index::sample;
use rand::Rng;

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Step used throughout the verification suites.
pub const DEFAULT_STEP: f64 = 1e-4;

/// Worst disagreement between analytic and numerical gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input index, element index)` of the worst probe.
    pub worst: (usize, usize),
    pub probes: usize,
    /// Candidates rejected because the `±h` stencil flips a rectifier.
    pub kinks: usize,
}

/// `|a − n| / max(1, |a|, |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

struct Eval {
    value: f64,
    tape: Tape<f64>,
    vars: Vec<Var>,
}

fn eval<F>(f: &F, inputs: &[Tensor<f64>], grads: bool) -> Result<Eval>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), grads)).collect();
    let out = f(&mut tape, &vars)?;
    if tape.value(out).numel() != 1 {
        return Err(Error::shape("grad_check", "function output must be scalar"));
    }
    let value = tape.value(out).data()[0];
    if grads {
        tape.backward(out)?;
    }
    Ok(Eval { value, tape, vars })
}

/// Checks every element of `x` at which the function is differentiable
/// within the stencil.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let g = |t: &mut Tape<f64>, v: &[Var]| f(t, v[0]);
    check_inputs(&g, std::slice::from_ref(x), h, |_, n| ((0..n).collect(), n))
}

/// Checks `probes` randomly chosen elements of every input (all of them if
/// fewer), drawing replacements for probes that straddle a rectifier kink.
pub fn grad_check_sampled<F, R>(
    f: F,
    inputs: &[Tensor<f64>],
    h: f64,
    probes: usize,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
    R: Rng,
{
    let orders: Vec<Vec<usize>> = inputs.iter().map(|t| sample(rng, t.numel(), t.numel()).into_vec()).collect();
    check_inputs(&f, inputs, h, |i, _| (orders[i].clone(), probes))
}

fn check_inputs<F>(
    f: &F,
    inputs: &[Tensor<f64>],
    h: f64,
    candidates: impl Fn(usize, usize) -> (Vec<usize>, usize),
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let base = eval(f, inputs, true)?;
    let pattern = base.tape.activation_pattern();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        probes: 0,
        kinks: 0,
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, var) in base.vars.iter().enumerate() {
        let analytic = base
            .tape
            .grad(*var)
            .unwrap_or_else(|| Tensor::zeros(inputs[i].shape().to_vec()));
        let (order, wanted) = candidates(i, inputs[i].numel());
        let mut taken = 0;
        for e in order {
            if taken == wanted {
                break;
            }
            let orig = inputs[i].data()[e];
            work[i].data_mut()[e] = orig + h;
            let plus = eval(f, &work, false)?;
            work[i].data_mut()[e] = orig - h;
            let minus = eval(f, &work, false)?;
            work[i].data_mut()[e] = orig;
            if plus.tape.activation_pattern() != pattern || minus.tape.activation_pattern() != pattern {
                report.kinks += 1;
                continue;
            }
            taken += 1;
            let numeric = (plus.value - minus.value) / (2.0 * h);
            let err = relative_error(analytic.data()[e], numeric);
            report.probes += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (i, e);
            }
        }
    }
    Ok(report)
}
