//! Exact squared Euclidean distance transform with anisotropic spacing,
//! one separable lower-envelope pass per axis.

use crate::par;
use crate::volume::{voxel_count, Extents};

/// 1-D pass: `out[q] = min_p f[p] + ((q − p)·s)²`, with infinite samples
/// treated as absent sites.
fn envelope(f: &[f64], s: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    v.clear();
    z.clear();
    let key = |p: usize| f[p] + (p as f64 * s).powi(2);
    for q in (0..f.len()).filter(|&q| f[q].is_finite()) {
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let x = (key(q) - key(p)) / (2.0 * s * s * (q - p) as f64);
                    if x <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(x);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut j = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while j + 1 < v.len() && z[j + 1] < qf {
            j += 1;
        }
        let p = v[j];
        *o = f[p] + ((q as f64 - p as f64) * s).powi(2);
    }
}

/// Runs the 1-D pass along `axis` over every line of `grid`.
fn pass(grid: &[f64], extents: Extents, axis: usize, s: f64) -> Vec<f64> {
    let [ed, eh, ew] = extents;
    let stride = [eh * ew, ew, 1][axis];
    let len = extents[axis];
    // Enumerate line starts in storage order.
    let starts: Vec<usize> = match axis {
        0 => (0..eh * ew).collect(),
        1 => (0..ed).flat_map(|d| (0..ew).map(move |w| d * eh * ew + w)).collect(),
        _ => (0..ed * eh).map(|r| r * ew).collect(),
    };
    let lines = par::map_slice(&starts, |&start| {
        let f: Vec<f64> = (0..len).map(|i| grid[start + i * stride]).collect();
        let mut out = vec![0.0; len];
        envelope(&f, s, &mut out, &mut Vec::with_capacity(len), &mut Vec::with_capacity(len));
        out
    });
    let mut result = vec![0.0; grid.len()];
    for (&start, line) in starts.iter().zip(&lines) {
        for (i, &v) in line.iter().enumerate() {
            result[start + i * stride] = v;
        }
    }
    result
}

/// Squared distance in mm from every voxel to the nearest voxel of `set`;
/// infinite everywhere when `set` is empty.
pub fn squared_distance_to(set: &[bool], extents: Extents, spacing: [f64; 3]) -> Vec<f64> {
    assert_eq!(set.len(), voxel_count(extents));
    let mut g: Vec<f64> = set.iter().map(|&b| if b { 0.0 } else { f64::INFINITY }).collect();
    for axis in [2, 1, 0] {
        g = pass(&g, extents, axis, spacing[axis]);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_matches_brute_force() {
        let f = [f64::INFINITY, 3.0, f64::INFINITY, 0.5, 7.0, f64::INFINITY, 0.0, f64::INFINITY];
        for s in [1.0, 0.7, 2.5] {
            let mut out = vec![0.0; f.len()];
            envelope(&f, s, &mut out, &mut Vec::new(), &mut Vec::new());
            for q in 0..f.len() {
                let brute = (0..f.len())
                    .map(|p| f[p] + ((q as f64 - p as f64) * s).powi(2))
                    .fold(f64::INFINITY, f64::min);
                assert!((out[q] - brute).abs() < 1e-12, "{q} {s}");
            }
        }
    }

    #[test]
    fn empty_set_is_infinite() {
        let d = squared_distance_to(&[false; 8], [2, 2, 2], [1.0; 3]);
        assert!(d.iter().all(|v| v.is_infinite()));
    }
}
