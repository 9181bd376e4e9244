//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every primitive in evaluation order. Node inputs
//! always precede the node itself, so a single reverse sweep over the tape
//! accumulates gradients for every leaf.

use crate::error::{dim_err, Error, Result};
use crate::ops;
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    },
    Gelu(Var),
    Reshape(Var),
    Gather {
        src: Var,
        index: Vec<usize>,
    },
    Concat(Vec<Var>),
    Resize {
        src: Var,
    },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Recording of a computation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.dims()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.dims() != y.dims() {
            return Err(dim_err(format!("add: {:?} vs {:?}", x.dims(), y.dims())));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let out = Tensor::new(x.dims().to_vec(), data)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.dims() != y.dims() {
            return Err(dim_err(format!("mul: {:?} vs {:?}", x.dims(), y.dims())));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::new(x.dims().to_vec(), data)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Adds a bias vector along the last axis of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let d = xv.last_dim();
        if bv.len() != d {
            return Err(dim_err(format!(
                "bias {:?} does not match last axis of {:?}",
                bv.dims(),
                xv.dims()
            )));
        }
        let b = bv.data();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + b[i % d])
            .collect();
        let out = Tensor::new(xv.dims().to_vec(), data)?;
        Ok(self.push(out, Op::AddBias(x, bias)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).map(|v| v * factor);
        self.push(out, Op::Scale(x, factor))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let out = ops::softmax_rows(self.value(x))?;
        Ok(self.push(out, Op::Softmax(x)))
    }

    pub fn layernorm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let out = ops::layernorm(self.value(x), self.value(gamma), self.value(beta), eps)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                eps,
            },
        ))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out = ops::gelu(self.value(x));
        self.push(out, Op::Gelu(x))
    }

    pub fn reshape(&mut self, x: Var, dims: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(dims)?;
        Ok(self.push(out, Op::Reshape(x)))
    }

    /// `out[i] = src[index[i]]` over flat storage, reshaped to `dims`.
    /// Indices may repeat or skip elements.
    pub fn gather(&mut self, src: Var, index: Vec<usize>, dims: &[usize]) -> Result<Var> {
        let s = self.value(src).data();
        if let Some(&bad) = index.iter().find(|&&i| i >= s.len()) {
            return Err(dim_err(format!(
                "gather index {bad} out of range {}",
                s.len()
            )));
        }
        let data = index.iter().map(|&i| s[i]).collect();
        let out = Tensor::new(dims.to_vec(), data)?;
        Ok(self.push(out, Op::Gather { src, index }))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = match self.dims(x) {
            &[r, c] => (r, c),
            dims => return Err(dim_err(format!("transpose expects a matrix, got {dims:?}"))),
        };
        let index = (0..r * c).map(|i| (i % r) * c + i / r).collect();
        self.gather(x, index, &[c, r])
    }

    /// Concatenates flat storage of `parts` and views it as `dims`.
    pub fn concat(&mut self, parts: &[Var], dims: &[usize]) -> Result<Var> {
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::new(dims.to_vec(), data)?;
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    /// Align-corners bilinear resize of an `h×w×c` node.
    pub fn bilinear_resize(&mut self, src: Var, th: usize, tw: usize) -> Result<Var> {
        let out = ops::bilinear_resize(self.value(src), th, tw)?;
        Ok(self.push(out, Op::Resize { src }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Gradients of a scalar `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar output, got dims {:?}",
                self.dims(output)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(vec![1.0]);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads: grads
                .into_iter()
                .zip(&self.nodes)
                .map(|(g, n)| {
                    g.map(|d| Tensor::new(n.value.dims().to_vec(), d).expect("gradient shape"))
                })
                .collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let mut acc = |v: Var, contrib: Vec<f64>| {
            match &mut grads[v.0] {
                Some(existing) => existing.iter_mut().zip(&contrib).for_each(|(e, c)| *e += c),
                slot @ None => *slot = Some(contrib),
            };
        };
        let out_dims = node.value.dims();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let gt = Tensor::new(out_dims.to_vec(), g.to_vec())?;
                let av = self.value(*a);
                let bv = self.value(*b);
                acc(*a, ops::matmul(&gt, &ops::transpose(bv)?)?.into_data());
                acc(*b, ops::matmul(&ops::transpose(av)?, &gt)?.into_data());
            }
            Op::Add(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, g.iter().zip(bv).map(|(g, y)| g * y).collect());
                acc(*b, g.iter().zip(av).map(|(g, x)| g * x).collect());
            }
            Op::AddBias(x, bias) => {
                let d = self.value(*bias).len();
                let mut db = vec![0.0; d];
                for (i, gv) in g.iter().enumerate() {
                    db[i % d] += gv;
                }
                acc(*x, g.to_vec());
                acc(*bias, db);
            }
            Op::Scale(x, f) => acc(*x, g.iter().map(|v| v * f).collect()),
            Op::Softmax(x) => {
                let s = node.value.data();
                let c = node.value.last_dim();
                let mut dx = vec![0.0; s.len()];
                for ((srow, grow), drow) in s.chunks(c).zip(g.chunks(c)).zip(dx.chunks_mut(c)) {
                    let dot: f64 = srow.iter().zip(grow).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        drow[j] = srow[j] * (grow[j] - dot);
                    }
                }
                acc(*x, dx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                eps,
            } => {
                let xv = self.value(*x);
                let gm = self.value(*gamma).data();
                let d = xv.last_dim();
                let n = d as f64;
                let mut dx = vec![0.0; xv.len()];
                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                for ((xrow, grow), drow) in
                    xv.data().chunks(d).zip(g.chunks(d)).zip(dx.chunks_mut(d))
                {
                    let (mean, inv) = ops::row_stats(xrow, *eps);
                    let xhat: Vec<f64> = xrow.iter().map(|v| (v - mean) * inv).collect();
                    let dxhat: Vec<f64> = grow.iter().zip(gm).map(|(a, b)| a * b).collect();
                    let sum_dxhat: f64 = dxhat.iter().sum();
                    let sum_dxhat_xhat: f64 = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum();
                    for j in 0..d {
                        dgamma[j] += grow[j] * xhat[j];
                        dbeta[j] += grow[j];
                        drow[j] = inv / n * (n * dxhat[j] - sum_dxhat - xhat[j] * sum_dxhat_xhat);
                    }
                }
                acc(*x, dx);
                acc(*gamma, dgamma);
                acc(*beta, dbeta);
            }
            Op::Gelu(x) => {
                let xv = self.value(*x).data();
                acc(
                    *x,
                    g.iter()
                        .zip(xv)
                        .map(|(gv, &v)| gv * (ops::normal_cdf(v) + v * ops::normal_pdf(v)))
                        .collect(),
                );
            }
            Op::Reshape(x) => acc(*x, g.to_vec()),
            Op::Gather { src, index } => {
                let mut ds = vec![0.0; self.value(*src).len()];
                for (gv, &i) in g.iter().zip(index) {
                    ds[i] += gv;
                }
                acc(*src, ds);
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    acc(p, g[offset..offset + n].to_vec());
                    offset += n;
                }
            }
            Op::Resize { src } => {
                let sv = self.value(*src);
                let (h, w, c) = (sv.dims()[0], sv.dims()[1], sv.dims()[2]);
                let (th, tw) = (out_dims[0], out_dims[1]);
                let rows = ops::resample_taps(h, th);
                let cols = ops::resample_taps(w, tw);
                let mut ds = vec![0.0; sv.len()];
                let mut k = 0;
                for &(y0, y1, fy) in &rows {
                    for &(x0, x1, fx) in &cols {
                        let taps = [
                            (y0, x0, (1.0 - fy) * (1.0 - fx)),
                            (y0, x1, (1.0 - fy) * fx),
                            (y1, x0, fy * (1.0 - fx)),
                            (y1, x1, fy * fx),
                        ];
                        for ch in 0..c {
                            let gv = g[k + ch];
                            for &(y, x, wgt) in &taps {
                                ds[(y * w + x) * c + ch] += wgt * gv;
                            }
                        }
                        k += c;
                    }
                }
                acc(*src, ds);
            }
            Op::Sum(x) => acc(*x, vec![g[0]; self.value(*x).len()]),
        }
        Ok(())
    }
}

/// Per-node gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` does not influence the output.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, zeros of `like`'s shape when unreachable.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.dims()))
    }
}
