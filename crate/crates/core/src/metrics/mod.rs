//! Per-class Dice overlap and average surface distance.

mod distance;
pub mod report;

pub use distance::squared_distance_to;
pub use report::{aggregate, parse_key_values, ClassMetrics, FoldSummary, MetricsReport};

use crate::error::{Error, Result};
use crate::par;
use crate::volume::{voxel_count, Extents, LabelVolume};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    /// |A|: predicted voxels of the class.
    pub predicted: usize,
    /// |B|: reference voxels of the class.
    pub reference: usize,
    /// |A∩B|.
    pub overlap: usize,
}

impl ConfusionCounts {
    pub fn dice(&self) -> f64 {
        let total = self.predicted + self.reference;
        if total == 0 {
            1.0
        } else {
            2.0 * self.overlap as f64 / total as f64
        }
    }
}

fn check_extents(pred: &LabelVolume, reference: &LabelVolume) -> Result<()> {
    if pred.extents != reference.extents {
        return Err(Error::shape(
            "metrics",
            format!("prediction extents {:?} differ from reference {:?}", pred.extents, reference.extents),
        ));
    }
    Ok(())
}

pub fn confusion(pred: &LabelVolume, reference: &LabelVolume, class: u8) -> Result<ConfusionCounts> {
    check_extents(pred, reference)?;
    let mut c = ConfusionCounts {
        predicted: 0,
        reference: 0,
        overlap: 0,
    };
    for (&a, &b) in pred.classes.iter().zip(&reference.classes) {
        c.predicted += (a == class) as usize;
        c.reference += (b == class) as usize;
        c.overlap += (a == class && b == class) as usize;
    }
    Ok(c)
}

/// `2|A∩B| / (|A|+|B|)`, and 1 when both masks are empty.
pub fn dice(pred: &LabelVolume, reference: &LabelVolume, class: u8) -> Result<f64> {
    Ok(confusion(pred, reference, class)?.dice())
}

/// Mask voxels with a 6-neighbour outside the mask or outside the grid.
pub fn boundary_voxels(mask: &[bool], extents: Extents) -> Vec<bool> {
    assert_eq!(mask.len(), voxel_count(extents));
    let [ed, eh, ew] = extents;
    let mut out = vec![false; mask.len()];
    let mut i = 0;
    for d in 0..ed {
        for h in 0..eh {
            for w in 0..ew {
                if mask[i] {
                    let plane = eh * ew;
                    out[i] = d == 0
                        || d + 1 == ed
                        || h == 0
                        || h + 1 == eh
                        || w == 0
                        || w + 1 == ew
                        || !mask[i - plane]
                        || !mask[i + plane]
                        || !mask[i - ew]
                        || !mask[i + ew]
                        || !mask[i - 1]
                        || !mask[i + 1];
                }
                i += 1;
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceDistance {
    /// Mean over predicted-boundary voxels of the distance to the reference boundary.
    pub pred_to_ref: f64,
    pub ref_to_pred: f64,
    /// Both directed sums over the total boundary voxel count.
    pub asd: f64,
}

/// Symmetric surface distance between two masks; `None` when either is empty.
pub fn surface_distance(a: &[bool], b: &[bool], extents: Extents, spacing: [f64; 3]) -> Option<SurfaceDistance> {
    let ba = boundary_voxels(a, extents);
    let bb = boundary_voxels(b, extents);
    let (na, nb) = (ba.iter().filter(|&&v| v).count(), bb.iter().filter(|&&v| v).count());
    if na == 0 || nb == 0 {
        return None;
    }
    let directed = |from: &[bool], to: &[bool]| -> f64 {
        let dist = squared_distance_to(to, extents, spacing);
        from.iter().zip(&dist).filter(|(&f, _)| f).map(|(_, &d)| d.sqrt()).sum()
    };
    let (sa, sb) = (directed(&ba, &bb), directed(&bb, &ba));
    Some(SurfaceDistance {
        pred_to_ref: sa / na as f64,
        ref_to_pred: sb / nb as f64,
        asd: (sa + sb) / (na + nb) as f64,
    })
}

/// ASD in mm using the reference voxel spacing; `None` when either class
/// mask is empty.
pub fn asd(pred: &LabelVolume, reference: &LabelVolume, class: u8) -> Result<Option<SurfaceDistance>> {
    check_extents(pred, reference)?;
    Ok(surface_distance(
        &pred.mask(class),
        &reference.mask(class),
        reference.extents,
        reference.spacing,
    ))
}

/// DSC and ASD for every foreground class (1..K), named by `class_names`
/// (index 0 is the background name and is skipped).
pub fn evaluate_all(pred: &LabelVolume, reference: &LabelVolume, class_names: &[String]) -> Result<MetricsReport> {
    check_extents(pred, reference)?;
    if class_names.len() < 2 {
        return Err(Error::Invalid("need at least one foreground class".into()));
    }
    let classes = par::map_indices(class_names.len() - 1, |i| {
        let class = (i + 1) as u8;
        let counts = confusion(pred, reference, class)?;
        Ok(ClassMetrics {
            name: class_names[i + 1].clone(),
            dice: counts.dice(),
            asd: asd(pred, reference, class)?.map(|s| s.asd),
            counts,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport { classes })
}
