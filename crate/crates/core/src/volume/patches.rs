//! Overlapping cubic patch tiling and logit stitching.

use super::{voxel_count, Extents, Volume};
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Element, Tensor};

/// Patch origins tiling a volume with cubes of side `size` at `stride`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub size: usize,
    pub stride: usize,
    pub extents: Extents,
    /// Per axis: `0, S, 2S, …` with the final origin clamped to `dim − P`.
    pub axis_origins: [Vec<usize>; 3],
}

fn axis_origins(dim: usize, size: usize, stride: usize) -> Vec<usize> {
    let last = dim - size;
    let mut out: Vec<usize> = (0..=last).step_by(stride).collect();
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

impl PatchGrid {
    pub fn new(extents: Extents, size: usize, stride: usize) -> Result<Self> {
        if size == 0 || stride == 0 {
            return Err(Error::Invalid(format!("patch size {size} and stride {stride} must be positive")));
        }
        if let Some(axis) = extents.iter().position(|&e| e < size) {
            return Err(Error::shape(
                "patch_grid",
                format!("extent {} on axis {axis} is smaller than patch size {size}", extents[axis]),
            ));
        }
        let axis_origins = [0, 1, 2].map(|a| axis_origins(extents[a], size, stride));
        Ok(PatchGrid {
            size,
            stride,
            extents,
            axis_origins,
        })
    }

    pub fn len(&self) -> usize {
        self.axis_origins.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All origins in lexicographic `(d, h, w)` order.
    pub fn origins(&self) -> Vec<[usize; 3]> {
        let [od, oh, ow] = &self.axis_origins;
        let mut out = Vec::with_capacity(self.len());
        for &d in od {
            for &h in oh {
                for &w in ow {
                    out.push([d, h, w]);
                }
            }
        }
        out
    }

    /// Number of patches covering each voxel.
    pub fn coverage(&self) -> Vec<u32> {
        let [_, eh, ew] = self.extents;
        let axis_counts = |a: usize| {
            let mut c = vec![0u32; self.extents[a]];
            for &o in &self.axis_origins[a] {
                c[o..o + self.size].iter_mut().for_each(|v| *v += 1);
            }
            c
        };
        let (cd, ch, cw) = (axis_counts(0), axis_counts(1), axis_counts(2));
        let mut out = vec![0u32; voxel_count(self.extents)];
        for (d, &a) in cd.iter().enumerate() {
            for (h, &b) in ch.iter().enumerate() {
                let row = &mut out[(d * eh + h) * ew..][..ew];
                for (v, &c) in row.iter_mut().zip(&cw) {
                    *v = a * b * c;
                }
            }
        }
        out
    }
}

/// Copies a cube at `origin` out of a `[D, H, W]` buffer.
pub fn crop<T: Copy>(src: &[T], extents: Extents, origin: [usize; 3], size: usize, dst: &mut [T]) {
    let [_, eh, ew] = extents;
    for z in 0..size {
        for y in 0..size {
            let s = ((origin[0] + z) * eh + origin[1] + y) * ew + origin[2];
            dst[(z * size + y) * size..][..size].copy_from_slice(&src[s..s + size]);
        }
    }
}

/// Patches `[M, P, P, P]` in grid order.
pub fn extract_patches(v: &Volume, grid: &PatchGrid) -> Result<Vec<([usize; 3], Tensor<f32>)>> {
    if v.extents != grid.extents {
        return Err(Error::shape(
            "extract_patches",
            format!("volume extents {:?} differ from grid extents {:?}", v.extents, grid.extents),
        ));
    }
    let p = grid.size;
    let cube = p * p * p;
    let origins = grid.origins();
    par::map_slice(&origins, |&o| {
        let mut data = vec![0.0f32; v.modalities() * cube];
        for (m, chan) in v.channels.iter().enumerate() {
            crop(chan, v.extents, o, p, &mut data[m * cube..(m + 1) * cube]);
        }
        Ok((o, Tensor::new(vec![v.modalities(), p, p, p], data)?))
    })
    .into_iter()
    .collect()
}

/// Voxelwise mean of overlapping `[K, P, P, P]` patch logits, as `[K, D, H, W]`.
/// Patches are accumulated in the order given.
pub fn stitch_patches<T: Element>(patches: &[([usize; 3], Tensor<T>)], extents: Extents) -> Result<Tensor<T>> {
    let first = patches
        .first()
        .ok_or_else(|| Error::Invalid("no patches to stitch".into()))?;
    let k = first.1.shape()[0];
    let p = first.1.shape()[1];
    for (o, t) in patches {
        if t.shape() != [k, p, p, p] || (0..3).any(|a| o[a] + p > extents[a]) {
            return Err(Error::shape(
                "stitch_patches",
                format!("patch {:?} at {o:?} does not fit a {k}-class grid of {extents:?}", t.shape()),
            ));
        }
    }
    let [_, eh, ew] = extents;
    let vox = voxel_count(extents);
    let mut coverage = vec![0u32; vox];
    for (o, _) in patches {
        for z in 0..p {
            for y in 0..p {
                let s = ((o[0] + z) * eh + o[1] + y) * ew + o[2];
                coverage[s..s + p].iter_mut().for_each(|c| *c += 1);
            }
        }
    }
    if let Some(i) = coverage.iter().position(|&c| c == 0) {
        let (d, h, w) = (i / (eh * ew), i / ew % eh, i % ew);
        return Err(Error::Invalid(format!("voxel ({d}, {h}, {w}) is not covered by any patch")));
    }
    // Running mean m += (x - m) / n, so identical contributions reproduce
    // their value exactly.
    let cube = p * p * p;
    let mut mean = vec![T::zero(); k * vox];
    par::for_each_chunk_mut(&mut mean, vox, |class, plane| {
        let mut seen = vec![0u32; vox];
        for (o, t) in patches {
            let src = &t.data()[class * cube..(class + 1) * cube];
            for z in 0..p {
                for y in 0..p {
                    let s = ((o[0] + z) * eh + o[1] + y) * ew + o[2];
                    let line = &src[(z * p + y) * p..][..p];
                    for ((m, n), &x) in plane[s..s + p].iter_mut().zip(&mut seen[s..s + p]).zip(line) {
                        *n += 1;
                        *m = *m + (x - *m) / T::from_f64(*n as f64);
                    }
                }
            }
        }
    });
    Tensor::new(vec![k, extents[0], extents[1], extents[2]], mean)
}

/// Class index of the largest logit per voxel (first wins on ties).
pub fn argmax_classes<T: Element>(logits: &Tensor<T>) -> Vec<u8> {
    let k = logits.shape()[0];
    let vox = logits.numel() / k;
    let d = logits.data();
    (0..vox)
        .map(|i| {
            let mut best = 0;
            for c in 1..k {
                if d[c * vox + i] > d[best * vox + i] {
                    best = c;
                }
            }
            best as u8
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_origin_examples() {
        assert_eq!(axis_origins(48, 32, 8), vec![0, 8, 16]);
        assert_eq!(axis_origins(32, 32, 8), vec![0]);
        assert_eq!(axis_origins(33, 32, 8), vec![0, 1]);
        assert_eq!(axis_origins(64, 32, 8), vec![0, 8, 16, 24, 32]);
        assert_eq!(axis_origins(45, 32, 8), vec![0, 8, 13]);
    }

    #[test]
    fn coverage_matches_enumeration() {
        let g = PatchGrid::new([9, 7, 8], 4, 3).unwrap();
        let mut brute = vec![0u32; 9 * 7 * 8];
        for o in g.origins() {
            for z in 0..4 {
                for y in 0..4 {
                    for x in 0..4 {
                        brute[((o[0] + z) * 7 + o[1] + y) * 8 + o[2] + x] += 1;
                    }
                }
            }
        }
        assert_eq!(g.coverage(), brute);
    }

    #[test]
    fn two_overlapping_patches_average() {
        let a = Tensor::<f64>::full(vec![1, 2, 2, 2], 1.0);
        let b = Tensor::<f64>::full(vec![1, 2, 2, 2], 3.0);
        let out = stitch_patches(&[([0, 0, 0], a), ([0, 0, 1], b)], [2, 2, 3]).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn uncovered_voxel_is_rejected() {
        let a = Tensor::<f64>::zeros(vec![1, 2, 2, 2]);
        assert!(stitch_patches(&[([0, 0, 0], a)], [2, 2, 3]).is_err());
    }
}
