use dualseg::volume::LabelVolume;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Ext = [usize; 3];

pub fn idx(e: Ext, d: usize, h: usize, w: usize) -> usize {
    (d * e[1] + h) * e[2] + w
}

pub fn coords(e: Ext, i: usize) -> [i64; 3] {
    [(i / (e[1] * e[2])) as i64, (i / e[2] % e[1]) as i64, (i % e[2]) as i64]
}

/// Neighbour-scan boundary with explicit bounds checks.
pub fn boundary_oracle(mask: &[bool], e: Ext) -> Vec<usize> {
    let offsets: [[i64; 3]; 6] = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];
    (0..mask.len())
        .filter(|&i| mask[i])
        .filter(|&i| {
            let c = coords(e, i);
            offsets.iter().any(|o| {
                let n = [c[0] + o[0], c[1] + o[1], c[2] + o[2]];
                let inside = (0..3).all(|a| n[a] >= 0 && n[a] < e[a] as i64);
                !inside || !mask[idx(e, n[0] as usize, n[1] as usize, n[2] as usize)]
            })
        })
        .collect()
}

/// All-pairs symmetric surface distance.
pub fn asd_oracle(a: &[bool], b: &[bool], e: Ext, s: [f64; 3]) -> Option<f64> {
    let (ba, bb) = (boundary_oracle(a, e), boundary_oracle(b, e));
    if ba.is_empty() || bb.is_empty() {
        return None;
    }
    let dist = |p: usize, q: usize| {
        let (x, y) = (coords(e, p), coords(e, q));
        (0..3).map(|k| ((x[k] - y[k]) as f64 * s[k]).powi(2)).sum::<f64>().sqrt()
    };
    let nearest = |p: usize, set: &[usize]| set.iter().map(|&q| dist(p, q)).fold(f64::INFINITY, f64::min);
    let total: f64 = ba.iter().map(|&p| nearest(p, &bb)).sum::<f64>() + bb.iter().map(|&p| nearest(p, &ba)).sum::<f64>();
    Some(total / (ba.len() + bb.len()) as f64)
}

pub fn dice_oracle(a: &[bool], b: &[bool]) -> f64 {
    let na = a.iter().filter(|&&x| x).count();
    let nb = b.iter().filter(|&&x| x).count();
    let both = a.iter().zip(b).filter(|(&x, &y)| x && y).count();
    if na + nb == 0 {
        1.0
    } else {
        2.0 * both as f64 / (na + nb) as f64
    }
}

pub fn labels(e: Ext, mask: &[bool]) -> LabelVolume {
    LabelVolume::new(e, [1.0; 3], mask.iter().map(|&m| m as u8).collect()).unwrap()
}

/// Either a speckle of independent voxels or a filled random box.
pub fn random_mask(rng: &mut ChaCha8Rng, e: Ext) -> Vec<bool> {
    let n = e[0] * e[1] * e[2];
    if rng.gen_bool(0.5) {
        let p = rng.gen_range(0.02..0.6);
        (0..n).map(|_| rng.gen_bool(p)).collect()
    } else {
        let lo: Vec<usize> = e.iter().map(|&x| rng.gen_range(0..x)).collect();
        let hi: Vec<usize> = (0..3).map(|a| rng.gen_range(lo[a]..e[a]) + 1).collect();
        (0..n)
            .map(|i| {
                let c = coords(e, i);
                (0..3).all(|a| c[a] as usize >= lo[a] && (c[a] as usize) < hi[a])
            })
            .collect()
    }
}
