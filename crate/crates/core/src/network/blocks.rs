//! Convolutional building blocks and the assembled U-shaped model.

use super::attention;
use super::forward::Forward;
use super::params::Layout;
use super::SegNetConfig;
use crate::autograd::{ConvSpec, Var};
use crate::error::{Error, Result};
use crate::tensor::Element;

/// Dilation rates of the three 3×3×3 pyramid branches.
pub const DILATIONS: [usize; 3] = [1, 2, 4];

const STRIDE2_POINTWISE: ConvSpec = ConvSpec::new(1, 2, 0, 1);
const STRIDE2_CUBE: ConvSpec = ConvSpec::new(3, 2, 1, 1);
const UPSAMPLE: ConvSpec = ConvSpec::new(2, 2, 0, 1);

fn branch_name(i: usize) -> String {
    match DILATIONS.get(i) {
        Some(d) => format!("d{d}"),
        None => "pw".to_string(),
    }
}

/// conv → batch norm → ReLU.
pub fn declare_conv_block(l: &mut Layout, prefix: &str, cin: usize, cout: usize, k: usize) {
    l.conv(&format!("{prefix}.conv"), cin, cout, k);
    l.batch_norm(&format!("{prefix}.bn"), cout);
}

pub fn conv_block<T: Element>(f: &mut Forward<'_, T>, prefix: &str, x: Var, spec: ConvSpec) -> Result<Var> {
    let y = f.conv(&format!("{prefix}.conv"), x, spec)?;
    f.bn_relu(&format!("{prefix}.bn"), y)
}

pub fn declare_dila_block(l: &mut Layout, prefix: &str, cin: usize, cbranch: usize) {
    l.batch_norm(&format!("{prefix}.pre"), cin);
    for (i, _) in DILATIONS.iter().enumerate() {
        l.conv(&format!("{prefix}.{}", branch_name(i)), cin, cbranch, 3);
    }
    l.conv(&format!("{prefix}.pw"), cin, cbranch, 1);
}

/// Pre-activation followed by four parallel branches (dilations 1, 2, 4 and a
/// pointwise convolution), concatenated on channels in that order.
pub fn dila_block<T: Element>(f: &mut Forward<'_, T>, prefix: &str, x: Var) -> Result<Var> {
    let pre = f.bn_relu(&format!("{prefix}.pre"), x)?;
    let mut outs = Vec::with_capacity(4);
    for (i, &d) in DILATIONS.iter().enumerate() {
        outs.push(f.conv(&format!("{prefix}.{}", branch_name(i)), pre, ConvSpec::same(3, d))?);
    }
    outs.push(f.conv(&format!("{prefix}.pw"), pre, ConvSpec::pointwise())?);
    f.tape.concat(&outs, 1)
}

pub fn declare_dcp_down(l: &mut Layout, prefix: &str, cin: usize, cout: usize) {
    let cbranch = cout / 4;
    l.conv(&format!("{prefix}.left"), cin, cout, 1);
    declare_dila_block(l, &format!("{prefix}.dila"), cin, cbranch);
    declare_conv_block(l, &format!("{prefix}.right"), 4 * cbranch, cout, 3);
}

fn check_even<T: Element>(f: &Forward<'_, T>, x: Var) -> Result<()> {
    let s = f.tape.shape(x);
    if s.len() != 5 || s[2..].iter().any(|d| d % 2 != 0) {
        return Err(Error::shape("dcp_down", format!("even spatial extents required, got {s:?}")));
    }
    Ok(())
}

/// Residual downsampling: a stride-2 pointwise projection plus a dila-block
/// followed by an activated stride-2 3×3×3 convolution.
pub fn dcp_down<T: Element>(f: &mut Forward<'_, T>, prefix: &str, x: Var) -> Result<Var> {
    check_even(f, x)?;
    let left = f.conv(&format!("{prefix}.left"), x, STRIDE2_POINTWISE)?;
    let pyramid = dila_block(f, &format!("{prefix}.dila"), x)?;
    let right = conv_block(f, &format!("{prefix}.right"), pyramid, STRIDE2_CUBE)?;
    f.tape.add(left, right)
}

pub fn declare_plain_down(l: &mut Layout, prefix: &str, cin: usize, cout: usize) {
    declare_conv_block(l, prefix, cin, cout, 3);
}

/// Activated stride-2 3×3×3 convolution (the ablation without DCP).
pub fn plain_down<T: Element>(f: &mut Forward<'_, T>, prefix: &str, x: Var) -> Result<Var> {
    check_even(f, x)?;
    conv_block(f, prefix, x, STRIDE2_CUBE)
}

pub fn declare_up(l: &mut Layout, prefix: &str, cin: usize, cout: usize) {
    l.deconv(&format!("{prefix}.deconv"), cin, cout, 2, 2);
    declare_conv_block(l, &format!("{prefix}.conv1"), 2 * cout, cout, 3);
    declare_conv_block(l, &format!("{prefix}.conv2"), cout, cout, 3);
}

/// Upsample by a stride-2 transposed convolution, concatenate the skip
/// connection, then two activated 3×3×3 convolutions.
pub fn up<T: Element>(f: &mut Forward<'_, T>, prefix: &str, x: Var, skip: Var) -> Result<Var> {
    let u = f.deconv(&format!("{prefix}.deconv"), x, UPSAMPLE)?;
    let cat = f.tape.concat(&[u, skip], 1)?;
    let h = conv_block(f, &format!("{prefix}.conv1"), cat, ConvSpec::same(3, 1))?;
    conv_block(f, &format!("{prefix}.conv2"), h, ConvSpec::same(3, 1))
}

fn attn_prefix(level: usize) -> String {
    format!("attn{level}")
}

pub fn declare_model(l: &mut Layout, cfg: &SegNetConfig) {
    declare_conv_block(l, "stem", cfg.modalities, cfg.channels(0), 3);
    for lvl in 1..=cfg.depth {
        let (cin, cout) = (cfg.channels(lvl - 1), cfg.channels(lvl));
        let prefix = format!("down{lvl}");
        if cfg.enable_dcp {
            declare_dcp_down(l, &prefix, cin, cout);
        } else {
            declare_plain_down(l, &prefix, cin, cout);
        }
    }
    if cfg.has_attention(cfg.depth) {
        attention::declare_dual_attention(l, &attn_prefix(cfg.depth), cfg.channels(cfg.depth));
    }
    for lvl in (0..cfg.depth).rev() {
        declare_up(l, &format!("up{lvl}"), cfg.channels(lvl + 1), cfg.channels(lvl));
        if cfg.has_attention(lvl) {
            attention::declare_dual_attention(l, &attn_prefix(lvl), cfg.channels(lvl));
        }
    }
    l.classifier("head", cfg.channels(0), cfg.classes);
}

/// Logits `[B, K, D, H, W]` for an input `[B, M, D, H, W]`.
pub fn model_forward<T: Element>(f: &mut Forward<'_, T>, cfg: &SegNetConfig, x: Var) -> Result<Var> {
    let s = f.tape.shape(x).to_vec();
    if s.len() != 5 || s[1] != cfg.modalities {
        return Err(Error::shape(
            "model_forward",
            format!("expected [B,{},D,H,W], got {s:?}", cfg.modalities),
        ));
    }
    cfg.check_extents(&s[2..])?;
    let mut skips = Vec::with_capacity(cfg.depth + 1);
    let mut h = conv_block(f, "stem", x, ConvSpec::same(3, 1))?;
    for lvl in 1..=cfg.depth {
        skips.push(h);
        let prefix = format!("down{lvl}");
        h = if cfg.enable_dcp {
            dcp_down(f, &prefix, h)?
        } else {
            plain_down(f, &prefix, h)?
        };
    }
    if cfg.has_attention(cfg.depth) {
        h = attention::dual_attention(f, &attn_prefix(cfg.depth), h)?;
    }
    for lvl in (0..cfg.depth).rev() {
        h = up(f, &format!("up{lvl}"), h, skips[lvl])?;
        if cfg.has_attention(lvl) {
            h = attention::dual_attention(f, &attn_prefix(lvl), h)?;
        }
    }
    f.conv("head", h, ConvSpec::pointwise())
}
