//! 3-D convolution kernels: patch gathering (im2col) into matrix multiplies.
//!
//! Both `conv3d` and `conv_transpose3d` are expressed through the same pair of
//! kernels, [`conv_forward`] and [`conv_backward`], operating on a [`ConvGeom`]
//! describing a forward correlation from "input space" to "output space". A
//! transposed convolution is the input-gradient of that correlation.

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::gemm::{gemm, MatRef};
use crate::tensor::Element;

/// Cubic kernel geometry: extent, stride, zero padding and dilation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl ConvSpec {
    pub const fn new(kernel: usize, stride: usize, padding: usize, dilation: usize) -> Self {
        ConvSpec {
            kernel,
            stride,
            padding,
            dilation,
        }
    }

    /// `k×k×k`, stride 1, "same" padding for the given dilation.
    pub const fn same(kernel: usize, dilation: usize) -> Self {
        ConvSpec::new(kernel, 1, dilation * (kernel - 1) / 2, dilation)
    }

    pub const fn pointwise() -> Self {
        ConvSpec::new(1, 1, 0, 1)
    }

    /// `floor((in + 2p − d(k−1) − 1)/s) + 1`
    pub fn out_extent(&self, input: usize) -> Result<usize> {
        if self.kernel == 0 || self.stride == 0 || self.dilation == 0 {
            return Err(Error::ConvGeometry(format!("degenerate spec {self:?}")));
        }
        let span = self.dilation * (self.kernel - 1) + 1;
        let padded = input + 2 * self.padding;
        if padded < span {
            return Err(Error::ConvGeometry(format!(
                "input extent {input} too small for {self:?} (padded {padded} < span {span})"
            )));
        }
        Ok((padded - span) / self.stride + 1)
    }

    /// `(in − 1)·s − 2p + d(k−1) + 1` for the transposed direction.
    pub fn transposed_out_extent(&self, input: usize) -> Result<usize> {
        let full = (input - 1) * self.stride + self.dilation * (self.kernel - 1) + 1;
        if full <= 2 * self.padding {
            return Err(Error::ConvGeometry(format!(
                "transposed extent non-positive for input {input} under {self:?}"
            )));
        }
        Ok(full - 2 * self.padding)
    }

    pub fn taps(&self) -> usize {
        self.kernel * self.kernel * self.kernel
    }
}

/// A forward correlation from `in_ch × in_dims` to `out_ch × out_dims`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub in_dims: [usize; 3],
    pub out_dims: [usize; 3],
    pub spec: ConvSpec,
}

const TARGET_COLS: usize = 2048;

impl ConvGeom {
    pub fn forward(batch: usize, in_ch: usize, out_ch: usize, in_dims: [usize; 3], spec: ConvSpec) -> Result<Self> {
        let out_dims = [
            spec.out_extent(in_dims[0])?,
            spec.out_extent(in_dims[1])?,
            spec.out_extent(in_dims[2])?,
        ];
        Ok(ConvGeom {
            batch,
            in_ch,
            out_ch,
            in_dims,
            out_dims,
            spec,
        })
    }

    fn in_plane(&self) -> usize {
        self.in_dims[1] * self.in_dims[2]
    }

    fn in_vol(&self) -> usize {
        self.in_dims.iter().product()
    }

    fn out_plane(&self) -> usize {
        self.out_dims[1] * self.out_dims[2]
    }

    fn out_vol(&self) -> usize {
        self.out_dims.iter().product()
    }

    /// Rows of the gathered patch matrix.
    fn patch_rows(&self) -> usize {
        self.in_ch * self.spec.taps()
    }

    fn planes_per_chunk(&self) -> usize {
        (TARGET_COLS / self.out_plane()).clamp(1, self.out_dims[0])
    }

    /// Output-depth ranges processed as one matrix multiply.
    fn chunks(&self) -> Vec<(usize, usize)> {
        let step = self.planes_per_chunk();
        (0..self.out_dims[0])
            .step_by(step)
            .map(|d0| (d0, (d0 + step).min(self.out_dims[0])))
            .collect()
    }

    pub fn weight_len(&self) -> usize {
        self.out_ch * self.patch_rows()
    }
}

/// Valid output range `[lo, hi)` along one axis for a tap offset `off`.
#[inline]
fn valid_range(out_len: usize, in_len: usize, stride: usize, off: isize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if off < 0 { ((-off) + s - 1) / s } else { 0 };
    let last = in_len as isize - 1 - off;
    let hi = if last < 0 { 0 } else { last / s + 1 };
    let lo = lo.min(out_len as isize) as usize;
    let hi = (hi.min(out_len as isize) as usize).max(lo);
    (lo, hi)
}

/// Gathers patches for output depths `[d0, d1)` into `col` (`rows × cols`).
fn im2col<T: Element>(x: &[T], g: &ConvGeom, d0: usize, d1: usize, col: &mut [T]) {
    let ConvSpec {
        kernel: k,
        stride: s,
        padding: p,
        dilation: dil,
    } = g.spec;
    let [id_n, ih_n, iw_n] = g.in_dims;
    let [_, oh_n, ow_n] = g.out_dims;
    let cols = (d1 - d0) * g.out_plane();
    let mut r = 0;
    for ci in 0..g.in_ch {
        let xc = &x[ci * g.in_vol()..(ci + 1) * g.in_vol()];
        for kd in 0..k {
            for kh in 0..k {
                for kw in 0..k {
                    let row = &mut col[r * cols..(r + 1) * cols];
                    r += 1;
                    let off_d = (kd * dil) as isize - p as isize;
                    let off_h = (kh * dil) as isize - p as isize;
                    let off_w = (kw * dil) as isize - p as isize;
                    let (wlo, whi) = valid_range(ow_n, iw_n, s, off_w);
                    for od in d0..d1 {
                        let plane = &mut row[(od - d0) * g.out_plane()..(od - d0 + 1) * g.out_plane()];
                        let id = (od * s) as isize + off_d;
                        if id < 0 || id >= id_n as isize {
                            plane.fill(T::zero());
                            continue;
                        }
                        for oh in 0..oh_n {
                            let line = &mut plane[oh * ow_n..(oh + 1) * ow_n];
                            let ih = (oh * s) as isize + off_h;
                            if ih < 0 || ih >= ih_n as isize {
                                line.fill(T::zero());
                                continue;
                            }
                            let src = &xc[id as usize * g.in_plane() + ih as usize * iw_n..][..iw_n];
                            line[..wlo].fill(T::zero());
                            line[whi..].fill(T::zero());
                            if s == 1 {
                                let start = (wlo as isize + off_w) as usize;
                                line[wlo..whi].copy_from_slice(&src[start..start + (whi - wlo)]);
                            } else {
                                for ow in wlo..whi {
                                    line[ow] = src[((ow * s) as isize + off_w) as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds a patch matrix for output depths `[d0, d1)` back into `dx`.
fn col2im<T: Element>(col: &[T], g: &ConvGeom, d0: usize, d1: usize, dx: &mut [T]) {
    let ConvSpec {
        kernel: k,
        stride: s,
        padding: p,
        dilation: dil,
    } = g.spec;
    let [id_n, ih_n, iw_n] = g.in_dims;
    let [_, oh_n, ow_n] = g.out_dims;
    let cols = (d1 - d0) * g.out_plane();
    let in_vol = g.in_vol();
    let in_plane = g.in_plane();
    let mut r = 0;
    for ci in 0..g.in_ch {
        let xc = &mut dx[ci * in_vol..(ci + 1) * in_vol];
        for kd in 0..k {
            for kh in 0..k {
                for kw in 0..k {
                    let row = &col[r * cols..(r + 1) * cols];
                    r += 1;
                    let off_d = (kd * dil) as isize - p as isize;
                    let off_h = (kh * dil) as isize - p as isize;
                    let off_w = (kw * dil) as isize - p as isize;
                    let (wlo, whi) = valid_range(ow_n, iw_n, s, off_w);
                    for od in d0..d1 {
                        let id = (od * s) as isize + off_d;
                        if id < 0 || id >= id_n as isize {
                            continue;
                        }
                        let plane = &row[(od - d0) * g.out_plane()..];
                        for oh in 0..oh_n {
                            let ih = (oh * s) as isize + off_h;
                            if ih < 0 || ih >= ih_n as isize {
                                continue;
                            }
                            let line = &plane[oh * ow_n..(oh + 1) * ow_n];
                            let dst = &mut xc[id as usize * in_plane + ih as usize * iw_n..][..iw_n];
                            if s == 1 {
                                let start = (wlo as isize + off_w) as usize;
                                for (d, &v) in dst[start..start + (whi - wlo)].iter_mut().zip(&line[wlo..whi]) {
                                    *d += v;
                                }
                            } else {
                                for ow in wlo..whi {
                                    dst[((ow * s) as isize + off_w) as usize] += line[ow];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Forward correlation `x (B, in_ch, in_dims) -> y (B, out_ch, out_dims)`.
/// `weight` is laid out `[out_ch, in_ch, k, k, k]`.
pub fn conv_forward<T: Element>(x: &[T], weight: &[T], bias: Option<&[T]>, g: &ConvGeom) -> Vec<T> {
    debug_assert_eq!(x.len(), g.batch * g.in_ch * g.in_vol());
    debug_assert_eq!(weight.len(), g.weight_len());
    let rows = g.patch_rows();
    let out_vol = g.out_vol();
    let chunks = g.chunks();
    let tasks: Vec<(usize, usize, usize)> = (0..g.batch)
        .flat_map(|b| chunks.iter().map(move |&(d0, d1)| (b, d0, d1)))
        .collect();
    let x_len = g.in_ch * g.in_vol();
    let w = MatRef::new(weight, g.out_ch, rows);
    let pieces = par::map_slice(&tasks, |&(b, d0, d1)| {
        let cols = (d1 - d0) * g.out_plane();
        let mut col = vec![T::zero(); rows * cols];
        im2col(&x[b * x_len..(b + 1) * x_len], g, d0, d1, &mut col);
        let mut out = vec![T::zero(); g.out_ch * cols];
        gemm(w, MatRef::new(&col, rows, cols), &mut out, false);
        out
    });
    let mut y = vec![T::zero(); g.batch * g.out_ch * out_vol];
    for (&(b, d0, d1), piece) in tasks.iter().zip(&pieces) {
        let cols = (d1 - d0) * g.out_plane();
        let start = d0 * g.out_plane();
        for co in 0..g.out_ch {
            let dst = &mut y[(b * g.out_ch + co) * out_vol + start..][..cols];
            dst.copy_from_slice(&piece[co * cols..(co + 1) * cols]);
            if let Some(bias) = bias {
                let bv = bias[co];
                dst.iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    y
}

/// Gradients of the forward correlation. `x` is only needed for the weight
/// gradient. Returns `(dx, dweight)` as requested.
pub fn conv_backward<T: Element>(
    x: Option<&[T]>,
    dy: &[T],
    weight: &[T],
    g: &ConvGeom,
    want_dx: bool,
    want_dw: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let rows = g.patch_rows();
    let out_vol = g.out_vol();
    let x_len = g.in_ch * g.in_vol();
    let y_len = g.out_ch * out_vol;
    let chunks = g.chunks();
    let w = MatRef::new(weight, g.out_ch, rows);
    assert!(!want_dw || x.is_some(), "weight gradient needs the input");

    let per_batch = par::map_indices(g.batch, |b| {
        let dy_b = &dy[b * y_len..(b + 1) * y_len];
        let mut dx_b = if want_dx { vec![T::zero(); x_len] } else { Vec::new() };
        let mut dw_b = if want_dw { vec![T::zero(); g.weight_len()] } else { Vec::new() };
        let mut col = Vec::new();
        for (ci, &(d0, d1)) in chunks.iter().enumerate() {
            let cols = (d1 - d0) * g.out_plane();
            let dy_chunk = MatRef::cols_of(dy_b, g.out_ch, out_vol, d0 * g.out_plane(), cols);
            col.resize(rows * cols, T::zero());
            if want_dw {
                let xb = &x.unwrap()[b * x_len..(b + 1) * x_len];
                im2col(xb, g, d0, d1, &mut col);
                gemm(dy_chunk, MatRef::new(&col, rows, cols).t(), &mut dw_b, ci > 0);
            }
            if want_dx {
                gemm(w.t(), dy_chunk, &mut col, false);
                col2im(&col, g, d0, d1, &mut dx_b);
            }
        }
        (dx_b, dw_b)
    });

    let mut dx = want_dx.then(|| Vec::with_capacity(g.batch * x_len));
    let mut dw = want_dw.then(|| vec![T::zero(); g.weight_len()]);
    for (dx_b, dw_b) in per_batch {
        if let Some(dx) = dx.as_mut() {
            dx.extend_from_slice(&dx_b);
        }
        if let Some(dw) = dw.as_mut() {
            dw.iter_mut().zip(&dw_b).for_each(|(a, &b)| *a += b);
        }
    }
    (dx, dw)
}

/// Per-channel sum over batch and positions (bias gradient).
pub fn channel_sums<T: Element>(dy: &[T], batch: usize, channels: usize, vol: usize) -> Vec<T> {
    let mut out = vec![T::zero(); channels];
    for b in 0..batch {
        for (c, o) in out.iter_mut().enumerate() {
            let s: T = dy[(b * channels + c) * vol..][..vol].iter().copied().sum();
            *o += s;
        }
    }
    out
}
