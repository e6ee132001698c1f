use super::conv::{conv_backward, conv_forward, ConvGeom, ConvSpec};
use super::tape::{Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::gemm::{gemm, MatRef};
use crate::tensor::{numel, Element, Tensor};

/// Per-channel statistics of one training-mode batch normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Biased (population) variance over the batch.
    pub var: Vec<T>,
    /// Number of elements each channel was reduced over.
    pub count: usize,
}

fn dims5(op: &'static str, shape: &[usize]) -> Result<(usize, usize, [usize; 3])> {
    if shape.len() != 5 {
        return Err(Error::shape(op, format!("expected [B,C,D,H,W], got {shape:?}")));
    }
    Ok((shape[0], shape[1], [shape[2], shape[3], shape[4]]))
}

impl<T: Element> Tape<T> {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn zip_map(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Var {
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(va.shape().to_vec(), data).unwrap();
        let rg = self.any_grad(&[a, b]);
        self.push(out, rg, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_map(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_map(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_map(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let c = T::from_f64(c);
        let out = self.value(a).map(|v| v * c);
        let rg = self.requires_grad(a);
        self.push(out, rg, Op::Scale(a, c))
    }

    /// Multiplication by a one-element tensor (e.g. a learnable scalar gain).
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).numel() != 1 {
            return Err(Error::shape("scale_by", format!("scalar expected, got {:?}", self.shape(s))));
        }
        let sv = self.value(s).data()[0];
        let out = self.value(a).map(|v| v * sv);
        let rg = self.any_grad(&[a, s]);
        Ok(self.push(out, rg, Op::ScaleBy(a, s)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| if v > T::zero() { v } else { T::zero() });
        let rg = self.requires_grad(a);
        self.push(out, rg, Op::Relu(a))
    }

    /// `[M,K] · [K,N] -> [M,N]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", format!("{sa:?} · {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(
            MatRef::new(self.value(a).data(), m, k),
            MatRef::new(self.value(b).data(), k, n),
            &mut out,
            false,
        );
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, rg, Op::MatMul(a, b)))
    }

    /// 2-D transpose.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(Error::shape("transpose", format!("2-D expected, got {s:?}")));
        }
        let (r, c) = (s[0], s[1]);
        let src = self.value(a).data();
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let rg = self.requires_grad(a);
        Ok(self.push(Tensor::new(vec![c, r], out)?, rg, Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.value(a).numel() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {shape:?} changes element count", self.shape(a)),
            ));
        }
        let out = self.value(a).clone().reshape(shape.to_vec())?;
        let rg = self.requires_grad(a);
        Ok(self.push(out, rg, Op::Reshape(a)))
    }

    /// Softmax along `axis`, stabilized by subtracting the slice maximum.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::shape("softmax", format!("axis {axis} for {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let x = self.value(a).data();
        let mut y = vec![T::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mut mx = T::neg_infinity();
                for l in 0..len {
                    mx = mx.max(x[base + l * inner]);
                }
                let mut z = T::zero();
                for l in 0..len {
                    let e = (x[base + l * inner] - mx).exp();
                    y[base + l * inner] = e;
                    z += e;
                }
                for l in 0..len {
                    y[base + l * inner] /= z;
                }
            }
        }
        let rg = self.requires_grad(a);
        Ok(self.push(
            Tensor::new(shape, y)?,
            rg,
            Op::Softmax {
                input: a,
                outer,
                len,
                inner,
            },
        ))
    }

    /// Concatenation along `axis`; all other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", format!("axis {axis} for {base:?}")));
        }
        let mut out_shape = base.clone();
        out_shape[axis] = 0;
        for v in inputs {
            let s = self.shape(*v);
            let agrees = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !agrees {
                return Err(Error::shape("concat", format!("{s:?} vs {base:?} on axis {axis}")));
            }
            out_shape[axis] += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let blocks: Vec<usize> = inputs.iter().map(|v| self.shape(*v)[axis] * inner).collect();
        let mut data = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            for (v, &blk) in inputs.iter().zip(&blocks) {
                data.extend_from_slice(&self.value(*v).data()[o * blk..(o + 1) * blk]);
            }
        }
        let rg = self.any_grad(inputs);
        Ok(self.push(
            Tensor::new(out_shape, data)?,
            rg,
            Op::Concat {
                inputs: inputs.to_vec(),
                outer,
                blocks,
            },
        ))
    }

    /// Slice `start..start + len` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::shape("narrow", format!("{start}+{len} on axis {axis} of {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let full = shape[axis] * inner;
        let block = len * inner;
        let offset = start * inner;
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * block);
        for o in 0..outer {
            data.extend_from_slice(&src[o * full + offset..o * full + offset + block]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let rg = self.requires_grad(a);
        Ok(self.push(
            Tensor::new(out_shape, data)?,
            rg,
            Op::Narrow {
                input: a,
                outer,
                full,
                offset,
                block,
            },
        ))
    }

    /// Sum of all elements as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().map(|v| v.as_f64()).sum::<f64>();
        let rg = self.requires_grad(a);
        self.push(Tensor::scalar(T::from_f64(s)), rg, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel();
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// Cross-correlation: `x [B,Cin,D,H,W]`, `w [Cout,Cin,k,k,k]`, `b [Cout]`.
    pub fn conv3d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let (bn, cin, dims) = dims5("conv3d", self.shape(x))?;
        let ws = self.shape(w).to_vec();
        let k = spec.kernel;
        if ws.len() != 5 || ws[1] != cin || ws[2..] != [k, k, k] {
            return Err(Error::shape(
                "conv3d",
                format!("weight {ws:?} incompatible with input channels {cin}, kernel {k}"),
            ));
        }
        let cout = ws[0];
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return Err(Error::shape("conv3d", format!("bias {:?} for {cout} outputs", self.shape(b))));
            }
        }
        let geom = ConvGeom::forward(bn, cin, cout, dims, spec)?;
        let y = conv_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &geom,
        );
        let od = geom.out_dims;
        let mut vars = vec![x, w];
        vars.extend(b);
        let rg = self.any_grad(&vars);
        Ok(self.push(
            Tensor::new(vec![bn, cout, od[0], od[1], od[2]], y)?,
            rg,
            Op::Conv { x, w, b, geom },
        ))
    }

    /// Transposed convolution: `x [B,Cin,D,H,W]`, `w [Cin,Cout,k,k,k]`, `b [Cout]`,
    /// output extent `(D−1)·s − 2p + d(k−1) + 1`. Exact adjoint of [`Tape::conv3d`].
    pub fn conv_transpose3d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let (bn, cin, dims) = dims5("conv_transpose3d", self.shape(x))?;
        let ws = self.shape(w).to_vec();
        let k = spec.kernel;
        if ws.len() != 5 || ws[0] != cin || ws[2..] != [k, k, k] {
            return Err(Error::shape(
                "conv_transpose3d",
                format!("weight {ws:?} incompatible with input channels {cin}, kernel {k}"),
            ));
        }
        let cout = ws[1];
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return Err(Error::shape(
                    "conv_transpose3d",
                    format!("bias {:?} for {cout} outputs", self.shape(b)),
                ));
            }
        }
        let od = [
            spec.transposed_out_extent(dims[0])?,
            spec.transposed_out_extent(dims[1])?,
            spec.transposed_out_extent(dims[2])?,
        ];
        // forward correlation from the output space (Cout channels) back to x's space
        let geom = ConvGeom::forward(bn, cout, cin, od, spec)?;
        if geom.out_dims != dims {
            return Err(Error::ConvGeometry(format!(
                "transposed geometry does not invert: {dims:?} -> {od:?} -> {:?}",
                geom.out_dims
            )));
        }
        let (y, _) = conv_backward(None, self.value(x).data(), self.value(w).data(), &geom, true, false);
        let mut y = y.unwrap();
        if let Some(b) = b {
            let vol: usize = od.iter().product();
            let bias = self.value(b).data();
            for (i, chunk) in y.chunks_mut(vol).enumerate() {
                let bv = bias[i % cout];
                chunk.iter_mut().for_each(|v| *v += bv);
            }
        }
        let mut vars = vec![x, w];
        vars.extend(b);
        let rg = self.any_grad(&vars);
        Ok(self.push(
            Tensor::new(vec![bn, cout, od[0], od[1], od[2]], y)?,
            rg,
            Op::ConvTranspose { x, w, b, geom },
        ))
    }

    fn bn_check(&self, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize, usize)> {
        let s = self.shape(x);
        if s.len() < 2 {
            return Err(Error::shape("batch_norm", format!("need [B,C,...], got {s:?}")));
        }
        let (bn, cn) = (s[0], s[1]);
        let vol: usize = s[2..].iter().product();
        if self.shape(gamma) != [cn] || self.shape(beta) != [cn] {
            return Err(Error::shape(
                "batch_norm",
                format!("gamma {:?} / beta {:?} for {cn} channels", self.shape(gamma), self.shape(beta)),
            ));
        }
        Ok((bn, cn, vol))
    }

    /// Training-mode batch normalization over every axis except channels.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats<T>)> {
        let (bn, cn, vol) = self.bn_check(x, gamma, beta)?;
        let xv = self.value(x).data();
        let count = bn * vol;
        let mut mean = vec![T::zero(); cn];
        let mut var = vec![T::zero(); cn];
        let mut inv_std = vec![T::zero(); cn];
        for c in 0..cn {
            let mut s = 0.0f64;
            for b in 0..bn {
                s += xv[(b * cn + c) * vol..][..vol].iter().map(|v| v.as_f64()).sum::<f64>();
            }
            let m = s / count as f64;
            let mut ss = 0.0f64;
            for b in 0..bn {
                ss += xv[(b * cn + c) * vol..][..vol]
                    .iter()
                    .map(|v| (v.as_f64() - m).powi(2))
                    .sum::<f64>();
            }
            let v = ss / count as f64;
            mean[c] = T::from_f64(m);
            var[c] = T::from_f64(v);
            inv_std[c] = T::from_f64(1.0 / (v + eps).sqrt());
        }
        let (out, xhat) = self.bn_apply(x, gamma, beta, &mean, &inv_std, bn, cn, vol);
        let rg = self.any_grad(&[x, gamma, beta]);
        let var_node = self.push(
            out,
            rg,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat: if rg { xhat } else { Vec::new() },
                inv_std,
                batch: bn,
                channels: cn,
                vol,
                batch_stats: true,
            },
        );
        Ok((var_node, BatchStats { mean, var, count }))
    }

    /// Evaluation-mode batch normalization with fixed statistics.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[T],
        running_var: &[T],
        eps: f64,
    ) -> Result<Var> {
        let (bn, cn, vol) = self.bn_check(x, gamma, beta)?;
        if running_mean.len() != cn || running_var.len() != cn {
            return Err(Error::shape("batch_norm", "running statistics length"));
        }
        let inv_std: Vec<T> = running_var
            .iter()
            .map(|v| T::from_f64(1.0 / (v.as_f64() + eps).sqrt()))
            .collect();
        let (out, xhat) = self.bn_apply(x, gamma, beta, running_mean, &inv_std, bn, cn, vol);
        let rg = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(
            out,
            rg,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat: if rg { xhat } else { Vec::new() },
                inv_std,
                batch: bn,
                channels: cn,
                vol,
                batch_stats: false,
            },
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn bn_apply(
        &self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[T],
        inv_std: &[T],
        bn: usize,
        cn: usize,
        vol: usize,
    ) -> (Tensor<T>, Vec<T>) {
        let xv = self.value(x).data();
        let g = self.value(gamma).data();
        let be = self.value(beta).data();
        let mut xhat = vec![T::zero(); xv.len()];
        let mut out = vec![T::zero(); xv.len()];
        for b in 0..bn {
            for c in 0..cn {
                let base = (b * cn + c) * vol;
                for i in base..base + vol {
                    let h = (xv[i] - mean[c]) * inv_std[c];
                    xhat[i] = h;
                    out[i] = g[c] * h + be[c];
                }
            }
        }
        (Tensor::new(self.shape(x).to_vec(), out).unwrap(), xhat)
    }

    /// Mean voxelwise softmax cross-entropy. `logits [B,K,...]`, `targets` in
    /// `[0,K)` laid out `[B,...]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() < 2 {
            return Err(Error::shape("cross_entropy", format!("need [B,K,...], got {s:?}")));
        }
        let (bn, kn) = (s[0], s[1]);
        let vol: usize = s[2..].iter().product();
        if targets.len() != bn * vol {
            return Err(Error::shape(
                "cross_entropy",
                format!("{} targets for {} voxels", targets.len(), bn * vol),
            ));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= kn) {
            return Err(Error::TargetOutOfRange {
                class: bad,
                classes: kn,
            });
        }
        let x = self.value(logits).data();
        let mut probs = vec![T::zero(); x.len()];
        let mut total = 0.0f64;
        for b in 0..bn {
            for i in 0..vol {
                let idx = |k: usize| (b * kn + k) * vol + i;
                let mx = (0..kn).map(|k| x[idx(k)].as_f64()).fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = (0..kn).map(|k| (x[idx(k)].as_f64() - mx).exp()).sum();
                for k in 0..kn {
                    probs[idx(k)] = T::from_f64((x[idx(k)].as_f64() - mx).exp() / z);
                }
                let t = targets[b * vol + i];
                total += mx + z.ln() - x[idx(t)].as_f64();
            }
        }
        let loss = total / (bn * vol) as f64;
        let rg = self.requires_grad(logits);
        Ok(self.push(
            Tensor::scalar(T::from_f64(loss)),
            rg,
            Op::CrossEntropy {
                logits,
                probs: if rg { probs } else { Vec::new() },
                targets: targets.to_vec(),
                batch: bn,
                classes: kn,
                vol,
            },
        ))
    }
}
