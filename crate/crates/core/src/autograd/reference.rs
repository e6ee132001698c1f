//! Explicit-loop kernels kept as oracles for the optimized paths.

use super::ConvSpec;
use crate::tensor::{Element, Tensor};

/// Direct cross-correlation, `x [B,Cin,D,H,W]`, `w [Cout,Cin,k,k,k]`.
pub fn conv3d<T: Element>(x: &Tensor<T>, w: &Tensor<T>, bias: Option<&Tensor<T>>, spec: ConvSpec) -> Tensor<T> {
    let (b_n, cin, dims) = (x.shape()[0], x.shape()[1], [x.shape()[2], x.shape()[3], x.shape()[4]]);
    let cout = w.shape()[0];
    let k = spec.kernel;
    let od: Vec<usize> = dims.iter().map(|&e| spec.out_extent(e).unwrap()).collect();
    let mut out = Tensor::zeros(vec![b_n, cout, od[0], od[1], od[2]]);
    for b in 0..b_n {
        for co in 0..cout {
            for z in 0..od[0] {
                for y in 0..od[1] {
                    for xo in 0..od[2] {
                        let mut acc = bias.map_or(T::zero(), |bb| bb.data()[co]);
                        for ci in 0..cin {
                            for kd in 0..k {
                                for kh in 0..k {
                                    for kw in 0..k {
                                        let iz = (z * spec.stride + kd * spec.dilation) as isize - spec.padding as isize;
                                        let iy = (y * spec.stride + kh * spec.dilation) as isize - spec.padding as isize;
                                        let ix = (xo * spec.stride + kw * spec.dilation) as isize - spec.padding as isize;
                                        if iz < 0 || iy < 0 || ix < 0 {
                                            continue;
                                        }
                                        let (iz, iy, ix) = (iz as usize, iy as usize, ix as usize);
                                        if iz >= dims[0] || iy >= dims[1] || ix >= dims[2] {
                                            continue;
                                        }
                                        acc += w.at(&[co, ci, kd, kh, kw]) * x.at(&[b, ci, iz, iy, ix]);
                                    }
                                }
                            }
                        }
                        let o = out.offset(&[b, co, z, y, xo]);
                        out.data_mut()[o] = acc;
                    }
                }
            }
        }
    }
    out
}

/// Direct transposed convolution in scatter form, `w [Cin,Cout,k,k,k]`.
pub fn conv_transpose3d<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: ConvSpec,
) -> Tensor<T> {
    let (b_n, cin, dims) = (x.shape()[0], x.shape()[1], [x.shape()[2], x.shape()[3], x.shape()[4]]);
    let cout = w.shape()[1];
    let k = spec.kernel;
    let od: Vec<usize> = dims.iter().map(|&e| spec.transposed_out_extent(e).unwrap()).collect();
    let mut out = Tensor::zeros(vec![b_n, cout, od[0], od[1], od[2]]);
    for b in 0..b_n {
        for ci in 0..cin {
            for z in 0..dims[0] {
                for y in 0..dims[1] {
                    for xi in 0..dims[2] {
                        let v = x.at(&[b, ci, z, y, xi]);
                        for co in 0..cout {
                            for kd in 0..k {
                                for kh in 0..k {
                                    for kw in 0..k {
                                        let oz = (z * spec.stride + kd * spec.dilation) as isize - spec.padding as isize;
                                        let oy = (y * spec.stride + kh * spec.dilation) as isize - spec.padding as isize;
                                        let ox = (xi * spec.stride + kw * spec.dilation) as isize - spec.padding as isize;
                                        if oz < 0 || oy < 0 || ox < 0 {
                                            continue;
                                        }
                                        let (oz, oy, ox) = (oz as usize, oy as usize, ox as usize);
                                        if oz >= od[0] || oy >= od[1] || ox >= od[2] {
                                            continue;
                                        }
                                        let o = out.offset(&[b, co, oz, oy, ox]);
                                        out.data_mut()[o] += v * w.at(&[ci, co, kd, kh, kw]);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(bias) = bias {
        let vol: usize = od.iter().product();
        for b in 0..b_n {
            for co in 0..cout {
                let base = (b * cout + co) * vol;
                let bv = bias.data()[co];
                out.data_mut()[base..base + vol].iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    out
}

/// Triple-loop matrix product.
pub fn matmul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    Tensor::from_fn(vec![m, n], |idx| {
        let (i, j) = (idx / n, idx % n);
        (0..k).map(|l| a.at(&[i, l]) * b.at(&[l, j])).sum()
    })
}
