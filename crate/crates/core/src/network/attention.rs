//! Self-attention over 3-D feature maps.
//!
//! A feature map `[1, C, D, H, W]` is flattened to a `(D·H·W) × C` matrix whose
//! rows are spatial positions. Position attention mixes rows through a
//! `(D·H·W) × (D·H·W)` affinity map; channel attention mixes columns through a
//! `C × C` map. Both end in a residual `x + γ · restore(·)` with `γ` starting
//! at zero, so either branch is the identity at initialization.

use super::forward::Forward;
use super::params::Layout;
use crate::autograd::{ConvSpec, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Element;

/// Query/key width for `c` channels.
pub fn embed_channels(c: usize) -> usize {
    (c / 8).max(1)
}

pub fn declare_position_attention(l: &mut Layout, prefix: &str, c: usize) {
    let ce = embed_channels(c);
    l.conv(&format!("{prefix}.query"), c, ce, 1);
    l.conv(&format!("{prefix}.key"), c, ce, 1);
    l.conv(&format!("{prefix}.value"), c, c, 1);
    l.conv(&format!("{prefix}.out"), c, c, 1);
    l.scalar_zero(format!("{prefix}.gamma"));
}

pub fn declare_channel_attention(l: &mut Layout, prefix: &str) {
    l.scalar_zero(format!("{prefix}.gamma"));
}

pub fn declare_dual_attention(l: &mut Layout, prefix: &str, c: usize) {
    declare_position_attention(l, &format!("{prefix}.pos"), c);
    declare_channel_attention(l, &format!("{prefix}.chan"));
    l.conv(&format!("{prefix}.fuse"), 2 * c, c, 1);
}

/// `[1, C, D, H, W] -> [(D·H·W), C]`
pub fn flatten_positions<T: Element>(t: &mut Tape<T>, x: Var) -> Result<Var> {
    let s = t.shape(x).to_vec();
    let n: usize = s[2..].iter().product();
    let cn = t.reshape(x, &[s[1], n])?;
    t.transpose(cn)
}

/// Inverse of [`flatten_positions`] for the given `[1, C, D, H, W]` shape.
pub fn restore<T: Element>(t: &mut Tape<T>, m: Var, shape: &[usize]) -> Result<Var> {
    let cn = t.transpose(m)?;
    t.reshape(cn, shape)
}

fn per_item<T: Element>(
    f: &mut Forward<'_, T>,
    x: Var,
    mut body: impl FnMut(&mut Forward<'_, T>, Var) -> Result<Var>,
) -> Result<Var> {
    let s = f.tape.shape(x).to_vec();
    if s.len() != 5 {
        return Err(Error::shape("attention", format!("expected [B,C,D,H,W], got {s:?}")));
    }
    if s[0] == 1 {
        return body(f, x);
    }
    let mut outs = Vec::with_capacity(s[0]);
    for b in 0..s[0] {
        let item = f.tape.narrow(x, 0, b, 1)?;
        outs.push(body(f, item)?);
    }
    f.tape.concat(&outs, 0)
}

/// Row-stochastic position affinity `softmax(B·Cᵀ / √C_E)` and the attended
/// values `F · Q_D`, before restoring. Exposed for inspection in tests.
pub struct PositionInternals {
    pub affinity: Var,
    pub attended: Var,
}

fn position_single<T: Element>(f: &mut Forward<'_, T>, prefix: &str, x: Var) -> Result<(Var, PositionInternals)> {
    let shape = f.tape.shape(x).to_vec();
    let c = shape[1];
    let ce = embed_channels(c);
    let q = f.conv(&format!("{prefix}.query"), x, ConvSpec::pointwise())?;
    let k = f.conv(&format!("{prefix}.key"), x, ConvSpec::pointwise())?;
    let v = f.conv(&format!("{prefix}.value"), x, ConvSpec::pointwise())?;
    let t = &mut f.tape;
    let qm = flatten_positions(t, q)?;
    let km = flatten_positions(t, k)?;
    let vm = flatten_positions(t, v)?;
    let kt = t.transpose(km)?;
    let energy = t.matmul(qm, kt)?;
    let energy = t.scale(energy, 1.0 / (ce as f64).sqrt());
    let affinity = t.softmax(energy, 1)?;
    let attended = t.matmul(affinity, vm)?;
    let restored = restore(t, attended, &shape)?;
    let o = f.conv(&format!("{prefix}.out"), restored, ConvSpec::pointwise())?;
    let gamma = f.param(&format!("{prefix}.gamma"))?;
    let scaled = f.tape.scale_by(o, gamma)?;
    let y = f.tape.add(x, scaled)?;
    Ok((y, PositionInternals { affinity, attended }))
}

/// `x + γ_pos · Conv₁(restore(softmax(B·Cᵀ/√C_E) · Q_D))`
pub fn position_attention<T: Element>(f: &mut Forward<'_, T>, prefix: &str, x: Var) -> Result<Var> {
    per_item(f, x, |f, item| Ok(position_single(f, prefix, item)?.0))
}

/// Position attention on a single map, also returning its internals.
pub fn position_attention_inspect<T: Element>(
    f: &mut Forward<'_, T>,
    prefix: &str,
    x: Var,
) -> Result<(Var, PositionInternals)> {
    if f.tape.shape(x)[0] != 1 {
        return Err(Error::shape("position_attention", "inspection needs a single feature map"));
    }
    position_single(f, prefix, x)
}

fn channel_single<T: Element>(f: &mut Forward<'_, T>, prefix: &str, x: Var) -> Result<(Var, Var)> {
    let shape = f.tape.shape(x).to_vec();
    let n: usize = shape[2..].iter().product();
    let t = &mut f.tape;
    let qa = flatten_positions(t, x)?;
    let qat = t.transpose(qa)?;
    let gram = t.matmul(qat, qa)?;
    let gram = t.scale(gram, 1.0 / (n as f64).sqrt());
    let affinity = t.softmax(gram, 1)?;
    let ft = t.transpose(affinity)?;
    let kc = t.matmul(qa, ft)?;
    let restored = restore(t, kc, &shape)?;
    let gamma = f.param(&format!("{prefix}.gamma"))?;
    let scaled = f.tape.scale_by(restored, gamma)?;
    Ok((f.tape.add(x, scaled)?, affinity))
}

/// `x + γ_chan · restore(Q_A · F_Cᵀ)` with `F_C = softmax(Q_Aᵀ·Q_A / √(D·H·W))`.
pub fn channel_attention<T: Element>(f: &mut Forward<'_, T>, prefix: &str, x: Var) -> Result<Var> {
    per_item(f, x, |f, item| Ok(channel_single(f, prefix, item)?.0))
}

/// Channel attention on a single map, also returning the `C × C` affinity.
pub fn channel_attention_inspect<T: Element>(f: &mut Forward<'_, T>, prefix: &str, x: Var) -> Result<(Var, Var)> {
    if f.tape.shape(x)[0] != 1 {
        return Err(Error::shape("channel_attention", "inspection needs a single feature map"));
    }
    channel_single(f, prefix, x)
}

/// Both branches on the same input, concatenated on channels and fused back to
/// `C` channels by a pointwise convolution.
pub fn dual_attention<T: Element>(f: &mut Forward<'_, T>, prefix: &str, x: Var) -> Result<Var> {
    let pos = position_attention(f, &format!("{prefix}.pos"), x)?;
    let chan = channel_attention(f, &format!("{prefix}.chan"), x)?;
    let cat = f.tape.concat(&[pos, chan], 1)?;
    f.conv(&format!("{prefix}.fuse"), cat, ConvSpec::pointwise())
}
