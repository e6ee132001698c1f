//! The segmentation network: dilated-pyramid downsampling, dual attention,
//! and the U-shaped encoder/decoder around them.

pub mod archive;
pub mod attention;
pub mod blocks;
mod config;
pub mod forward;
pub mod params;

pub use blocks::model_forward;
pub use config::{SegNetConfig, Variant};
pub use forward::{apply_running_updates, Forward, Mode};
pub use params::{init_params, layout, load_params, save_params, SegNetParams};

use crate::error::Result;
use crate::tensor::{Element, Tensor};

/// Logits for a batch of patches without recording gradients.
pub fn predict<T: Element>(
    params: &SegNetParams<T>,
    cfg: &SegNetConfig,
    input: Tensor<T>,
    mode: Mode,
) -> Result<Tensor<T>> {
    let mut f = Forward::inference(params, mode, cfg.bn_eps, cfg.bn_momentum);
    let x = f.input(input);
    let y = model_forward(&mut f, cfg, x)?;
    Ok(f.tape.value(y).clone())
}
