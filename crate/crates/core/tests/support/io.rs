use byteorder::{ByteOrder, LittleEndian};
use dualseg::volume::Volume;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_volume(seed: u64, extents: [usize; 3], channels: usize) -> Volume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = extents.iter().product();
    let chans = (0..channels)
        .map(|_| (0..n).map(|_| f32::from_bits(rng.gen::<u32>() & 0xbfff_ffff)).collect())
        .collect();
    Volume::new(extents, [0.9375, 1.0, 1.25], chans).unwrap()
}

pub fn same_bits(a: &Volume, b: &Volume) -> bool {
    a.extents == b.extents
        && a.spacing == b.spacing
        && a.channels.len() == b.channels.len()
        && a.channels.iter().flatten().zip(b.channels.iter().flatten()).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Byte-swaps a little-endian NIfTI-1 file field by field.
pub fn swap_to_big_endian(le: &[u8], elem_size: usize) -> Vec<u8> {
    let mut b = le.to_vec();
    let swap = |b: &mut [u8], off: usize, size: usize, count: usize| {
        for i in 0..count {
            b[off + i * size..off + (i + 1) * size].reverse();
        }
    };
    // (offset, element size, count) for every numeric header field.
    let fields: [(usize, usize, usize); 14] = [
        (0, 4, 1),
        (32, 4, 1),
        (36, 2, 1),
        (40, 2, 8),
        (56, 4, 3),
        (68, 2, 4),
        (76, 4, 8),
        (108, 4, 3),
        (120, 2, 1),
        (124, 4, 4),
        (140, 4, 2),
        (252, 2, 2),
        (256, 4, 6),
        (280, 4, 12),
    ];
    for &(o, s, c) in &fields {
        swap(&mut b, o, s, c);
    }
    let vox = LittleEndian::read_f32(&le[108..112]) as usize;
    if elem_size > 1 {
        let n = (le.len() - vox) / elem_size;
        swap(&mut b, vox, elem_size, n);
    }
    b
}
