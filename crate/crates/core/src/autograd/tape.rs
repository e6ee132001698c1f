use super::conv::{channel_sums, conv_backward, conv_forward, ConvGeom};
use crate::error::{Error, Result};
use crate::tensor::gemm::{gemm, MatRef};
use crate::tensor::{Element, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    ScaleBy(Var, Var),
    Relu(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Softmax {
        input: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    Concat {
        inputs: Vec<Var>,
        outer: usize,
        blocks: Vec<usize>,
    },
    Narrow {
        input: Var,
        outer: usize,
        full: usize,
        offset: usize,
        block: usize,
    },
    Sum(Var),
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    /// `geom` describes the forward correlation from output space to input space.
    ConvTranspose {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch: usize,
        channels: usize,
        vol: usize,
        batch_stats: bool,
    },
    CrossEntropy {
        logits: Var,
        probs: Vec<T>,
        targets: Vec<usize>,
        batch: usize,
        classes: usize,
        vol: usize,
    },
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op<T>,
}

/// Linear record of operations for reverse-mode differentiation.
///
/// Nodes are appended in creation order, so the tape is acyclic by
/// construction and [`Tape::backward`] visits them in reverse exactly once.
pub struct Tape<T> {
    pub(crate) nodes: Vec<Node<T>>,
    leaf_grads: Vec<Option<Vec<T>>>,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    /// Sign of every rectifier input on the tape, in recording order.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for n in &self.nodes {
            if let Op::Relu(a) = n.op {
                out.extend(self.nodes[a.0].value.data().iter().map(|v| *v > T::zero()));
            }
        }
        out
    }

    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Accumulated gradient of a leaf, if backward reached it.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        let g = self.leaf_grads.get(v.0)?.as_ref()?;
        Some(Tensor::new(self.nodes[v.0].value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    pub fn zero_grads(&mut self) {
        self.leaf_grads.clear();
    }

    /// Propagates `d loss / d leaf` into every differentiable leaf.
    /// Leaf gradients accumulate across calls until [`Tape::zero_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        if self.leaf_grads.len() < self.nodes.len() {
            self.leaf_grads.resize_with(self.nodes.len(), || None);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                accumulate(&mut self.leaf_grads[i], g);
                continue;
            }
            let acc = &mut Acc {
                nodes: &self.nodes,
                grads: &mut grads,
            };
            backward_node(&self.nodes, node, g, acc);
        }
        Ok(())
    }
}

fn accumulate<T: Element>(slot: &mut Option<Vec<T>>, g: Vec<T>) {
    match slot {
        Some(existing) => existing.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
        None => *slot = Some(g),
    }
}

struct Acc<'a, T> {
    nodes: &'a [Node<T>],
    grads: &'a mut [Option<Vec<T>>],
}

impl<T: Element> Acc<'_, T> {
    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn add(&mut self, v: Var, g: Vec<T>) {
        if self.wants(v) {
            accumulate(&mut self.grads[v.0], g);
        }
    }

    fn add_with(&mut self, v: Var, f: impl FnOnce() -> Vec<T>) {
        if self.wants(v) {
            let g = f();
            accumulate(&mut self.grads[v.0], g);
        }
    }
}

fn backward_node<T: Element>(nodes: &[Node<T>], node: &Node<T>, g: Vec<T>, acc: &mut Acc<'_, T>) {
    let val = |v: Var| nodes[v.0].value.data();
    match &node.op {
        Op::Leaf => unreachable!(),
        Op::Add(a, b) => {
            acc.add_with(*b, || g.clone());
            acc.add(*a, g);
        }
        Op::Sub(a, b) => {
            acc.add_with(*b, || g.iter().map(|&v| -v).collect());
            acc.add(*a, g);
        }
        Op::Mul(a, b) => {
            acc.add_with(*a, || g.iter().zip(val(*b)).map(|(&g, &y)| g * y).collect());
            acc.add_with(*b, || g.iter().zip(val(*a)).map(|(&g, &x)| g * x).collect());
        }
        Op::Scale(a, c) => acc.add_with(*a, || g.iter().map(|&v| v * *c).collect()),
        Op::ScaleBy(a, s) => {
            let sv = val(*s)[0];
            acc.add_with(*s, || vec![g.iter().zip(val(*a)).map(|(&g, &x)| g * x).sum()]);
            acc.add_with(*a, || g.iter().map(|&v| v * sv).collect());
        }
        Op::Relu(a) => acc.add_with(*a, || {
            g.iter()
                .zip(val(*a))
                .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                .collect()
        }),
        Op::MatMul(a, b) => {
            let (m, k) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
            let n = nodes[b.0].value.shape()[1];
            acc.add_with(*a, || {
                let mut ga = vec![T::zero(); m * k];
                gemm(MatRef::new(&g, m, n), MatRef::new(val(*b), k, n).t(), &mut ga, false);
                ga
            });
            acc.add_with(*b, || {
                let mut gb = vec![T::zero(); k * n];
                gemm(MatRef::new(val(*a), m, k).t(), MatRef::new(&g, m, n), &mut gb, false);
                gb
            });
        }
        Op::Transpose(a) => acc.add_with(*a, || {
            let (r, c) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
            // g has shape [c, r]
            let mut out = vec![T::zero(); r * c];
            for i in 0..c {
                for j in 0..r {
                    out[j * c + i] = g[i * r + j];
                }
            }
            out
        }),
        Op::Reshape(a) => acc.add(*a, g),
        Op::Softmax {
            input,
            outer,
            len,
            inner,
        } => acc.add_with(*input, || {
            let y = node.value.data();
            let mut dx = vec![T::zero(); y.len()];
            for o in 0..*outer {
                for i in 0..*inner {
                    let base = o * len * inner + i;
                    let mut dot = T::zero();
                    for l in 0..*len {
                        let idx = base + l * inner;
                        dot += g[idx] * y[idx];
                    }
                    for l in 0..*len {
                        let idx = base + l * inner;
                        dx[idx] = y[idx] * (g[idx] - dot);
                    }
                }
            }
            dx
        }),
        Op::Concat {
            inputs,
            outer,
            blocks,
        } => {
            let total: usize = blocks.iter().sum();
            let mut start = 0;
            for (v, &blk) in inputs.iter().zip(blocks) {
                acc.add_with(*v, || {
                    let mut out = Vec::with_capacity(outer * blk);
                    for o in 0..*outer {
                        out.extend_from_slice(&g[o * total + start..o * total + start + blk]);
                    }
                    out
                });
                start += blk;
            }
        }
        Op::Narrow {
            input,
            outer,
            full,
            offset,
            block,
        } => acc.add_with(*input, || {
            let mut out = vec![T::zero(); outer * full];
            for o in 0..*outer {
                out[o * full + offset..o * full + offset + block]
                    .copy_from_slice(&g[o * block..(o + 1) * block]);
            }
            out
        }),
        Op::Sum(a) => acc.add_with(*a, || vec![g[0]; nodes[a.0].value.numel()]),
        Op::Conv { x, w, b, geom } => {
            let want_dx = acc.wants(*x);
            let want_dw = acc.wants(*w);
            if let Some(b) = b {
                acc.add_with(*b, || {
                    channel_sums(&g, geom.batch, geom.out_ch, geom.out_dims.iter().product())
                });
            }
            if want_dx || want_dw {
                let (dx, dw) = conv_backward(Some(val(*x)), &g, val(*w), geom, want_dx, want_dw);
                if let Some(dx) = dx {
                    acc.add(*x, dx);
                }
                if let Some(dw) = dw {
                    acc.add(*w, dw);
                }
            }
        }
        Op::ConvTranspose { x, w, b, geom } => {
            if let Some(b) = b {
                acc.add_with(*b, || {
                    channel_sums(&g, geom.batch, geom.in_ch, geom.in_dims.iter().product())
                });
            }
            acc.add_with(*x, || conv_forward(&g, val(*w), None, geom));
            if acc.wants(*w) {
                let (_, dw) = conv_backward(Some(&g), val(*x), val(*w), geom, false, true);
                acc.add(*w, dw.unwrap());
            }
        }
        Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            batch,
            channels,
            vol,
            batch_stats,
        } => {
            let (bn, cn, vn) = (*batch, *channels, *vol);
            let m = T::from_f64((bn * vn) as f64);
            let gam = val(*gamma);
            let mut sum_g = vec![T::zero(); cn];
            let mut sum_gx = vec![T::zero(); cn];
            for b in 0..bn {
                for c in 0..cn {
                    let base = (b * cn + c) * vn;
                    for i in base..base + vn {
                        sum_g[c] += g[i];
                        sum_gx[c] += g[i] * xhat[i];
                    }
                }
            }
            acc.add_with(*x, || {
                let mut dx = vec![T::zero(); g.len()];
                for b in 0..bn {
                    for c in 0..cn {
                        let base = (b * cn + c) * vn;
                        let scale = gam[c] * inv_std[c];
                        if *batch_stats {
                            let mg = sum_g[c] / m;
                            let mgx = sum_gx[c] / m;
                            for i in base..base + vn {
                                dx[i] = scale * (g[i] - mg - xhat[i] * mgx);
                            }
                        } else {
                            for i in base..base + vn {
                                dx[i] = scale * g[i];
                            }
                        }
                    }
                }
                dx
            });
            acc.add(*gamma, sum_gx);
            acc.add(*beta, sum_g);
        }
        Op::CrossEntropy {
            logits,
            probs,
            targets,
            batch,
            classes,
            vol,
        } => acc.add_with(*logits, || {
            let scale = g[0] / T::from_f64((batch * vol) as f64);
            let mut d: Vec<T> = probs.iter().map(|&p| p * scale).collect();
            for b in 0..*batch {
                for i in 0..*vol {
                    let t = targets[b * vol + i];
                    d[(b * classes + t) * vol + i] -= scale;
                }
            }
            d
        }),
    }
}
