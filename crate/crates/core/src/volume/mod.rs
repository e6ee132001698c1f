//! Multi-modal volumes, label grids, patch tiling and synthetic phantoms.

mod labels;
pub mod patches;
pub mod phantom;

pub use labels::{LabelMap, LabelVolume};
pub use patches::{argmax_classes, crop, extract_patches, stitch_patches, PatchGrid};
pub use phantom::{synth_phantom, DEFAULT_NOISE};

use crate::error::{Error, Result};

/// Voxel extents `[D, H, W]`, stored row-major with W fastest.
pub type Extents = [usize; 3];

pub fn voxel_count(e: Extents) -> usize {
    e[0] * e[1] * e[2]
}

/// Intensity grid with one buffer per modality.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub extents: Extents,
    /// Millimetres per voxel along each axis.
    pub spacing: [f64; 3],
    pub channels: Vec<Vec<f32>>,
}

impl Volume {
    pub fn new(extents: Extents, spacing: [f64; 3], channels: Vec<Vec<f32>>) -> Result<Self> {
        if extents.iter().any(|&e| e == 0) {
            return Err(Error::Invalid(format!("volume extents {extents:?} must be positive")));
        }
        if spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Invalid(format!("voxel spacing {spacing:?} must be positive")));
        }
        if channels.is_empty() {
            return Err(Error::Invalid("volume needs at least one modality".into()));
        }
        let n = voxel_count(extents);
        if let Some(c) = channels.iter().position(|c| c.len() != n) {
            return Err(Error::shape(
                "volume",
                format!("modality {c} has {} voxels, extents need {n}", channels[c].len()),
            ));
        }
        Ok(Volume {
            extents,
            spacing,
            channels,
        })
    }

    pub fn modalities(&self) -> usize {
        self.channels.len()
    }

    pub fn voxels(&self) -> usize {
        voxel_count(self.extents)
    }
}

/// Per-modality z-score over nonzero voxels; zero voxels stay zero. A
/// foreground with zero spread is centred but not rescaled.
pub fn normalize(v: &Volume) -> Volume {
    let channels = v
        .channels
        .iter()
        .map(|c| {
            let fg: Vec<f64> = c.iter().filter(|&&x| x != 0.0).map(|&x| x as f64).collect();
            if fg.is_empty() {
                return c.clone();
            }
            let n = fg.len() as f64;
            let mean = fg.iter().sum::<f64>() / n;
            let var = fg.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let std = if var > 0.0 { var.sqrt() } else { 1.0 };
            c.iter()
                .map(|&x| if x == 0.0 { 0.0 } else { ((x as f64 - mean) / std) as f32 })
                .collect()
        })
        .collect();
    Volume {
        extents: v.extents,
        spacing: v.spacing,
        channels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn stats(c: &[f32]) -> (f64, f64) {
        let fg: Vec<f64> = c.iter().filter(|&&x| x != 0.0).map(|&x| x as f64).collect();
        let n = fg.len() as f64;
        let m = fg.iter().sum::<f64>() / n;
        (m, (fg.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
    }

    #[test]
    fn random_volume_normalizes_foreground() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let c: Vec<f32> = (0..4096)
            .map(|i| if i % 5 == 0 { 0.0 } else { rng.gen_range(10.0..300.0) })
            .collect();
        let v = Volume::new([16, 16, 16], [1.0; 3], vec![c.clone()]).unwrap();
        let out = normalize(&v);
        let (m, s) = stats(&out.channels[0]);
        assert!(m.abs() < 1e-6, "{m}");
        assert!((s - 1.0).abs() < 1e-6, "{s}");
        for (a, b) in c.iter().zip(&out.channels[0]) {
            assert_eq!(*a == 0.0, *b == 0.0);
        }
        // already standardized → unchanged
        let again = normalize(&out);
        for (a, b) in again.channels[0].iter().zip(&out.channels[0]) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_foreground_becomes_zero() {
        let c: Vec<f32> = (0..64).map(|i| if i < 10 { 0.0 } else { 7.5 }).collect();
        let v = Volume::new([4, 4, 4], [1.0; 3], vec![c]).unwrap();
        assert!(normalize(&v).channels[0].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_inconsistent_modalities() {
        assert!(Volume::new([2, 2, 2], [1.0; 3], vec![vec![0.0; 8], vec![0.0; 7]]).is_err());
        assert!(Volume::new([2, 2, 2], [0.0, 1.0, 1.0], vec![vec![0.0; 8]]).is_err());
    }
}
