//! Synthetic two-modality "infant brain": nested deformed ellipsoidal shells
//! of CSF, GM and WM around a zero background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use super::{voxel_count, Extents, LabelVolume, Volume};
use crate::error::{Error, Result};

pub const DEFAULT_NOISE: f64 = 0.08;

/// Class means `[CSF, GM, WM]` per modality. GM and WM nearly coincide in
/// the first (isointense) modality and are well apart in the second.
pub const MEANS: [[f64; 3]; 2] = [[0.25, 0.58, 0.62], [0.90, 0.60, 0.30]];

/// Normalized-radius thresholds of the WM, GM and CSF outer surfaces.
const SHELLS: [f64; 3] = [0.55, 0.78, 1.0];
/// Summed deformation amplitude per surface stays below this, which keeps
/// the shells strictly nested.
const MAX_WARP: f64 = 0.08;
const WAVES: usize = 4;

/// Smooth radial scale over directions: `1 + Σ a_j cos(ω_j (w_j · u) + φ_j)`.
struct Warp {
    waves: Vec<([f64; 3], f64, f64, f64)>,
}

impl Warp {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut amps: Vec<f64> = (0..WAVES).map(|_| rng.gen_range(0.2..1.0)).collect();
        let total: f64 = amps.iter().sum();
        let budget = rng.gen_range(0.5..1.0) * MAX_WARP;
        amps.iter_mut().for_each(|a| *a *= budget / total);
        let waves = amps
            .into_iter()
            .map(|a| {
                let w: [f64; 3] = UnitSphere.sample(rng);
                (w, a, rng.gen_range(2.0..6.0), rng.gen_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        Warp { waves }
    }

    fn scale(&self, u: [f64; 3]) -> f64 {
        1.0 + self
            .waves
            .iter()
            .map(|(w, a, om, ph)| a * (om * (w[0] * u[0] + w[1] * u[1] + w[2] * u[2]) + ph).cos())
            .sum::<f64>()
    }
}

/// Returns a 1 mm volume with modalities `[T1-like, T2-like]` and its labels
/// (0 background, 1 CSF, 2 GM, 3 WM). Noise is added inside the head only,
/// and brain intensities are kept strictly positive so the background is the
/// only zero region.
pub fn synth_phantom(seed: u64, extents: Extents, noise: f64) -> Result<(Volume, LabelVolume)> {
    if extents.iter().any(|&e| e < 32) {
        return Err(Error::Invalid(format!("phantom extents {extents:?} must be at least 32 per axis")));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(Error::Invalid(format!("noise level {noise} must be finite and non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = extents.map(|e| e as f64 / 2.0);
    let centre: [f64; 3] = [0, 1, 2].map(|a| half[a] + rng.gen_range(-0.04..0.04) * extents[a] as f64);
    let axes: [f64; 3] = [0, 1, 2].map(|a| half[a] * rng.gen_range(0.78..0.88));
    let warps: Vec<Warp> = (0..3).map(|_| Warp::random(&mut rng)).collect();
    let gauss = Normal::new(0.0, 1.0).unwrap();

    let n = voxel_count(extents);
    let mut classes = vec![0u8; n];
    let mut channels = vec![vec![0.0f32; n]; 2];
    let mut i = 0;
    for d in 0..extents[0] {
        for h in 0..extents[1] {
            for w in 0..extents[2] {
                let q = [d, h, w].map(|v| v as f64 + 0.5);
                let rel = [0, 1, 2].map(|a| (q[a] - centre[a]) / axes[a]);
                let rho = (rel[0] * rel[0] + rel[1] * rel[1] + rel[2] * rel[2]).sqrt();
                let u = if rho > 0.0 { rel.map(|r| r / rho) } else { [0.0, 0.0, 1.0] };
                let class = (0..3)
                    .find(|&s| rho < SHELLS[s] * warps[s].scale(u))
                    .map_or(0, |s| 3 - s as u8);
                classes[i] = class;
                if class > 0 {
                    for (m, chan) in channels.iter_mut().enumerate() {
                        let v = MEANS[m][class as usize - 1] + noise * gauss.sample(&mut rng);
                        chan[i] = v.max(1e-3) as f32;
                    }
                }
                i += 1;
            }
        }
    }
    let spacing = [1.0; 3];
    Ok((Volume::new(extents, spacing, channels)?, LabelVolume::new(extents, spacing, classes)?))
}
