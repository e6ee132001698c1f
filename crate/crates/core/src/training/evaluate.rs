use crate::error::{Error, Result};
use crate::metrics::{evaluate_all, MetricsReport};
use crate::network::{predict, Mode, SegNetConfig, SegNetParams};
use crate::tensor::Tensor;
use crate::volume::{argmax_classes, extract_patches, normalize, stitch_patches, LabelVolume, PatchGrid, Volume};

pub const EVAL_PATCH: usize = 32;
pub const EVAL_STRIDE: usize = 8;
/// Patches per forward pass during inference.
pub const INFER_BATCH: usize = 4;

/// Labels from stitched patch logits. `predict` receives a group of
/// `(origin, [M, P, P, P])` patches and returns one `[K, P, P, P]` logit
/// tensor per patch. `volume` is used as given.
pub fn segment_with<F>(volume: &Volume, size: usize, stride: usize, mut predict: F) -> Result<LabelVolume>
where
    F: FnMut(&[([usize; 3], Tensor<f32>)]) -> Result<Vec<Tensor<f32>>>,
{
    let grid = PatchGrid::new(volume.extents, size, stride)?;
    let patches = extract_patches(volume, &grid)?;
    let mut logits = Vec::with_capacity(patches.len());
    for group in patches.chunks(INFER_BATCH) {
        let out = predict(group)?;
        if out.len() != group.len() {
            return Err(Error::Invalid(format!("predictor returned {} of {} patches", out.len(), group.len())));
        }
        logits.extend(group.iter().map(|(o, _)| *o).zip(out));
    }
    let stitched = stitch_patches(&logits, volume.extents)?;
    LabelVolume::new(volume.extents, volume.spacing, argmax_classes(&stitched))
}

/// Eval-mode network predictions for a group of patches.
pub fn predict_patches(
    params: &SegNetParams<f32>,
    cfg: &SegNetConfig,
    group: &[([usize; 3], Tensor<f32>)],
) -> Result<Vec<Tensor<f32>>> {
    let first = group.first().ok_or_else(|| Error::Invalid("empty patch group".into()))?;
    let shape = first.1.shape().to_vec();
    let mut data = Vec::with_capacity(group.len() * first.1.numel());
    for (_, t) in group {
        data.extend_from_slice(t.data());
    }
    let mut batch_shape = vec![group.len()];
    batch_shape.extend_from_slice(&shape);
    let logits = predict(params, cfg, Tensor::new(batch_shape, data)?, Mode::Eval)?;
    let s = logits.shape().to_vec();
    let per = logits.numel() / s[0];
    (0..s[0])
        .map(|b| Tensor::new(s[1..].to_vec(), logits.data()[b * per..(b + 1) * per].to_vec()))
        .collect()
}

/// Normalize, predict every patch of the `size`/`stride` grid, stitch and
/// take the per-voxel argmax.
pub fn segment(
    volume: &Volume,
    params: &SegNetParams<f32>,
    cfg: &SegNetConfig,
    size: usize,
    stride: usize,
) -> Result<LabelVolume> {
    cfg.check_extents(&[size; 3])?;
    let normalized = normalize(volume);
    segment_with(&normalized, size, stride, |group| predict_patches(params, cfg, group))
}

/// Segments `volume` on the evaluation grid and scores it against `labels`.
pub fn evaluate_subject(
    volume: &Volume,
    labels: &LabelVolume,
    params: &SegNetParams<f32>,
    cfg: &SegNetConfig,
    class_names: &[String],
) -> Result<MetricsReport> {
    let pred = segment(volume, params, cfg, EVAL_PATCH, EVAL_STRIDE)?;
    evaluate_all(&pred, labels, class_names)
}
