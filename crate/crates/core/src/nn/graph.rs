use std::rc::Rc;

use super::gemm::{gemm, Layout};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(super) usize);

#[derive(Debug, Clone, Copy)]
pub(super) struct ConvGeom {
    pub ci: usize,
    pub h: usize,
    pub w: usize,
    pub co: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    fn k(&self) -> usize {
        self.ci * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.oh * self.ow
    }
}

pub(super) enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Rc<[f64]>),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    SqrtEps(Var),
    SoftmaxRows(Var),
    Reshape(Var),
    Permute3(Var, [usize; 3]),
    Upsample2(Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
        cols: Vec<f64>,
    },
    TopkMask(Var, Vec<bool>),
    Mse {
        a: Var,
        b: Var,
        weights: Option<Rc<[f64]>>,
        denom: f64,
    },
    L1(Var, Var),
    Synthesize(super::spectral::SynthesizeRecord),
    FrameMag(super::spectral::FrameMagRecord),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::MatMulBt(..) => "matmul_bt",
            Op::AddBias(..) => "add_bias",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::MulConst(..) => "mul_const",
            Op::Scale(..) => "scale",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::SqrtEps(..) => "sqrt",
            Op::SoftmaxRows(..) => "softmax",
            Op::Reshape(..) => "reshape",
            Op::Permute3(..) => "permute",
            Op::Upsample2(..) => "upsample",
            Op::Conv2d { .. } => "conv2d",
            Op::TopkMask(..) => "topk_mask",
            Op::Mse { .. } => "mse",
            Op::L1(..) => "l1",
            Op::Synthesize(..) => "istft",
            Op::FrameMag(..) => "frame_magnitude",
        }
    }
}

pub(super) struct Node {
    pub value: Tensor,
    pub grad: Option<Tensor>,
    pub op: Op,
    pub needs_grad: bool,
}

/// Operation tape. Values are computed eagerly as ops are recorded.
#[derive(Default)]
pub struct Graph {
    pub(super) nodes: Vec<Node>,
}

fn shape_err<T>(op: &str, detail: String) -> Result<T> {
    Err(Error::Shape(format!("{op}: {detail}")))
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

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            grad: None,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            grad: None,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub(super) fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "{} produced a non-finite value (node {})",
                op.name(),
                self.nodes.len()
            )));
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let src = &self.nodes[x.0].value;
        let value = Tensor {
            shape: src.shape.clone(),
            data: src.data.iter().map(|&v| f(v)).collect(),
        };
        self.push(value, op, &[x])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return shape_err("matmul", format!("[{m}, {k}] x [{k2}, {n}]"));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &self.value(a).data, Layout::rm(k), &self.value(b).data, Layout::rm(n), &mut out, 0.0);
        self.push(Tensor { shape: vec![m, n], data: out }, Op::MatMul(a, b), &[a, b])
    }

    /// `a · bᵀ` for `a: [m, k]`, `b: [n, k]`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (n, k2) = self.value(b).dims2()?;
        if k != k2 {
            return shape_err("matmul_bt", format!("[{m}, {k}] x [{n}, {k2}]^T"));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &self.value(a).data, Layout::rm(k), &self.value(b).data, Layout::tr(k), &mut out, 0.0);
        self.push(Tensor { shape: vec![m, n], data: out }, Op::MatMulBt(a, b), &[a, b])
    }

    /// Row-broadcast bias: `x: [m, n]`, `b: [n]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (m, n) = self.value(x).dims2()?;
        if self.value(b).shape != [n] {
            return shape_err("add_bias", format!("[{m}, {n}] + {:?}", self.value(b).shape));
        }
        let bias = &self.value(b).data;
        let mut out = self.value(x).data.clone();
        for row in out.chunks_exact_mut(n) {
            row.iter_mut().zip(bias).for_each(|(o, b)| *o += b);
        }
        self.push(Tensor { shape: vec![m, n], data: out }, Op::AddBias(x, b), &[x, b])
    }

    /// Dense layer `x·W + b`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape != self.value(b).shape {
            return shape_err("add", format!("{:?} + {:?}", self.value(a).shape, self.value(b).shape));
        }
        let data = self.value(a).data.iter().zip(&self.value(b).data).map(|(x, y)| x + y).collect();
        let shape = self.value(a).shape.clone();
        self.push(Tensor { shape, data }, Op::Add(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape != self.value(b).shape {
            return shape_err("mul", format!("{:?} * {:?}", self.value(a).shape, self.value(b).shape));
        }
        let data = self.value(a).data.iter().zip(&self.value(b).data).map(|(x, y)| x * y).collect();
        let shape = self.value(a).shape.clone();
        self.push(Tensor { shape, data }, Op::Mul(a, b), &[a, b])
    }

    /// Elementwise product with a constant buffer of the same length.
    pub fn mul_const(&mut self, a: Var, c: Rc<[f64]>) -> Result<Var> {
        if self.value(a).len() != c.len() {
            return shape_err("mul_const", format!("{} vs {}", self.value(a).len(), c.len()));
        }
        let data = self.value(a).data.iter().zip(c.iter()).map(|(x, y)| x * y).collect();
        let shape = self.value(a).shape.clone();
        self.push(Tensor { shape, data }, Op::MulConst(a, c), &[a])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.unary(a, |v| v * s, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |v| v.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(
            a,
            |v| {
                if v >= 0.0 {
                    1.0 / (1.0 + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (1.0 + e)
                }
            },
            Op::Sigmoid(a),
        )
    }

    /// `sqrt(x + eps)`.
    pub fn sqrt_eps(&mut self, a: Var, eps: f64) -> Result<Var> {
        self.unary(a, |v| (v + eps).sqrt(), Op::SqrtEps(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        let mut out = self.value(a).data.clone();
        for row in out.chunks_exact_mut(n) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                s += *v;
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        self.push(Tensor { shape: vec![m, n], data: out }, Op::SoftmaxRows(a), &[a])
    }

    /// Scaled dot-product attention `softmax(Q·Kᵀ/√d_k)·V`, single head.
    pub fn attention(&mut self, q: Var, k: Var, v: Var) -> Result<Var> {
        let (_, dk) = self.value(q).dims2()?;
        let (tk, _) = self.value(k).dims2()?;
        let (tv, _) = self.value(v).dims2()?;
        if tk != tv {
            return shape_err("attention", format!("{tk} keys vs {tv} values"));
        }
        let scores = self.matmul_bt(q, k)?;
        let scaled = self.scale(scores, 1.0 / (dk as f64).sqrt())?;
        let weights = self.softmax_rows(scaled)?;
        self.matmul(weights, v)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(a).len() {
            return shape_err("reshape", format!("{:?} -> {shape:?}", self.value(a).shape));
        }
        let value = Tensor {
            shape: shape.to_vec(),
            data: self.value(a).data.clone(),
        };
        self.push(value, Op::Reshape(a), &[a])
    }

    /// Axis permutation of a rank-3 tensor: output axis `i` is input axis `perm[i]`.
    pub fn permute3(&mut self, a: Var, perm: [usize; 3]) -> Result<Var> {
        let dims = self.value(a).dims3()?;
        let d = [dims.0, dims.1, dims.2];
        let mut sorted = perm;
        sorted.sort_unstable();
        if sorted != [0, 1, 2] {
            return shape_err("permute3", format!("invalid permutation {perm:?}"));
        }
        let od = [d[perm[0]], d[perm[1]], d[perm[2]]];
        let src = &self.value(a).data;
        let mut out = vec![0.0; src.len()];
        let in_strides = [d[1] * d[2], d[2], 1];
        let s = [in_strides[perm[0]], in_strides[perm[1]], in_strides[perm[2]]];
        let mut o = 0;
        for i in 0..od[0] {
            for j in 0..od[1] {
                let base = i * s[0] + j * s[1];
                for k in 0..od[2] {
                    out[o] = src[base + k * s[2]];
                    o += 1;
                }
            }
        }
        self.push(Tensor { shape: od.to_vec(), data: out }, Op::Permute3(a, perm), &[a])
    }

    /// Nearest-neighbour ×2 upsampling of `[C, H, W]`.
    pub fn upsample2(&mut self, a: Var) -> Result<Var> {
        let (c, h, w) = self.value(a).dims3()?;
        let src = &self.value(a).data;
        let (h2, w2) = (2 * h, 2 * w);
        let mut out = vec![0.0; c * h2 * w2];
        for ch in 0..c {
            for y in 0..h2 {
                let srow = &src[(ch * h + y / 2) * w..(ch * h + y / 2 + 1) * w];
                let drow = &mut out[(ch * h2 + y) * w2..(ch * h2 + y + 1) * w2];
                for (x, d) in drow.iter_mut().enumerate() {
                    *d = srow[x / 2];
                }
            }
        }
        self.push(Tensor { shape: vec![c, h2, w2], data: out }, Op::Upsample2(a), &[a])
    }

    /// 2-D cross-correlation: `x: [C_in, H, W]`, `w: [C_out, C_in, kh, kw]`, `b: [C_out]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let (ci, h, wd) = self.value(x).dims3()?;
        let ws = self.value(w).shape.clone();
        let [co, wci, kh, kw] = ws[..] else {
            return shape_err("conv2d", format!("kernel shape {ws:?}"));
        };
        if wci != ci || self.value(b).shape != [co] || stride == 0 {
            return shape_err("conv2d", format!("input [{ci}, {h}, {wd}], kernel {ws:?}, bias {:?}", self.value(b).shape));
        }
        if h + 2 * pad < kh || wd + 2 * pad < kw {
            return shape_err("conv2d", format!("kernel {kh}x{kw} larger than padded input"));
        }
        let geom = ConvGeom {
            ci,
            h,
            w: wd,
            co,
            kh,
            kw,
            stride,
            pad,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (wd + 2 * pad - kw) / stride + 1,
        };
        let cols = im2col(&self.value(x).data, &geom);
        let (k, p) = (geom.k(), geom.p());
        let mut out = vec![0.0; co * p];
        for (o, bias) in out.chunks_exact_mut(p).zip(&self.value(b).data) {
            o.iter_mut().for_each(|v| *v = *bias);
        }
        gemm(co, k, p, &self.value(w).data, Layout::rm(k), &cols, Layout::rm(p), &mut out, 1.0);
        self.push(
            Tensor {
                shape: vec![co, geom.oh, geom.ow],
                data: out,
            },
            Op::Conv2d { x, w, b, geom, cols },
            &[x, w, b],
        )
    }

    /// Keeps the `k` largest entries of each row (ties to the lower index) and
    /// zeroes the rest. Gradient passes straight through the kept positions.
    pub fn topk_mask(&mut self, a: Var, k: usize) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if k == 0 || k > n {
            return shape_err("topk_mask", format!("k = {k} for rows of {n}"));
        }
        let src = &self.value(a).data;
        let mut keep = vec![false; m * n];
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = &src[r * n..(r + 1) * n];
            for c in crate::ace::select_row(row, k) {
                keep[r * n + c] = true;
                out[r * n + c] = row[c];
            }
        }
        self.push(Tensor { shape: vec![m, n], data: out }, Op::TopkMask(a, keep), &[a])
    }

    /// Mean squared error. With `weights`, the mean is `Σ w·d² / Σ w`.
    pub fn mse(&mut self, a: Var, b: Var, weights: Option<Rc<[f64]>>) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape != vb.shape {
            return shape_err("mse", format!("{:?} vs {:?}", va.shape, vb.shape));
        }
        if let Some(w) = &weights {
            if w.len() != va.len() {
                return shape_err("mse", format!("{} weights for {} entries", w.len(), va.len()));
            }
        }
        let (num, denom) = match &weights {
            None => (
                va.data.iter().zip(&vb.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>(),
                va.len() as f64,
            ),
            Some(w) => (
                va.data.iter().zip(&vb.data).zip(w.iter()).map(|((x, y), w)| w * (x - y) * (x - y)).sum::<f64>(),
                w.iter().sum::<f64>(),
            ),
        };
        let value = if denom > 0.0 { num / denom } else { 0.0 };
        self.push(Tensor::scalar(value), Op::Mse { a, b, weights, denom }, &[a, b])
    }

    /// Mean absolute error.
    pub fn l1(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape != vb.shape {
            return shape_err("l1", format!("{:?} vs {:?}", va.shape, vb.shape));
        }
        let s: f64 = va.data.iter().zip(&vb.data).map(|(x, y)| (x - y).abs()).sum();
        let n = va.len().max(1) as f64;
        self.push(Tensor::scalar(s / n), Op::L1(a, b), &[a, b])
    }

    /// Backpropagate from a scalar node.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).len() != 1 {
            return shape_err("backward", format!("root has shape {:?}", self.value(root).shape));
        }
        self.backward_from(root, Tensor::filled(&self.value(root).shape.clone(), 1.0))
    }

    /// Backpropagate an explicit upstream gradient from `root`.
    pub fn backward_from(&mut self, root: Var, seed: Tensor) -> Result<()> {
        if seed.shape != self.value(root).shape {
            return shape_err("backward", "seed shape differs from root".into());
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[root.0].grad = Some(seed);
        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            let contribs = self.backward_node(i, &g);
            self.nodes[i].grad = Some(g);
            for (v, t) in contribs {
                let node = &mut self.nodes[v.0];
                if !node.needs_grad {
                    continue;
                }
                match &mut node.grad {
                    Some(acc) => acc.add_assign(&t),
                    slot => *slot = Some(t),
                }
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some(g) = &n.grad {
                if !g.is_finite() {
                    return Err(Error::Numeric(format!("non-finite gradient at node {i} ({})", n.op.name())));
                }
            }
        }
        Ok(())
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn like(&self, v: Var, data: Vec<f64>) -> Tensor {
        Tensor {
            shape: self.nodes[v.0].value.shape.clone(),
            data,
        }
    }

    fn backward_node(&self, i: usize, g: &Tensor) -> Vec<(Var, Tensor)> {
        let node = &self.nodes[i];
        let y = &node.value;
        let mut out = Vec::with_capacity(3);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2().unwrap();
                let n = y.shape[1];
                if self.ng(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, &g.data, Layout::rm(n), &self.value(*b).data, Layout::tr(n), &mut da, 0.0);
                    out.push((*a, self.like(*a, da)));
                }
                if self.ng(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, &self.value(*a).data, Layout::tr(k), &g.data, Layout::rm(n), &mut db, 0.0);
                    out.push((*b, self.like(*b, db)));
                }
            }
            Op::MatMulBt(a, b) => {
                let (m, k) = self.value(*a).dims2().unwrap();
                let n = y.shape[1];
                if self.ng(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, &g.data, Layout::rm(n), &self.value(*b).data, Layout::rm(k), &mut da, 0.0);
                    out.push((*a, self.like(*a, da)));
                }
                if self.ng(*b) {
                    let mut db = vec![0.0; n * k];
                    gemm(n, m, k, &g.data, Layout::tr(n), &self.value(*a).data, Layout::rm(k), &mut db, 0.0);
                    out.push((*b, self.like(*b, db)));
                }
            }
            Op::AddBias(x, b) => {
                if self.ng(*x) {
                    out.push((*x, g.clone()));
                }
                if self.ng(*b) {
                    let n = y.shape[1];
                    let mut db = vec![0.0; n];
                    for row in g.data.chunks_exact(n) {
                        db.iter_mut().zip(row).for_each(|(d, r)| *d += r);
                    }
                    out.push((*b, self.like(*b, db)));
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.ng(*v) {
                        out.push((*v, g.clone()));
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    let d = g.data.iter().zip(&self.value(*b).data).map(|(g, v)| g * v).collect();
                    out.push((*a, self.like(*a, d)));
                }
                if self.ng(*b) {
                    let d = g.data.iter().zip(&self.value(*a).data).map(|(g, v)| g * v).collect();
                    out.push((*b, self.like(*b, d)));
                }
            }
            Op::MulConst(a, c) => {
                let d = g.data.iter().zip(c.iter()).map(|(g, v)| g * v).collect();
                out.push((*a, self.like(*a, d)));
            }
            Op::Scale(a, s) => {
                out.push((*a, self.like(*a, g.data.iter().map(|v| v * s).collect())));
            }
            Op::Relu(a) => {
                let d = g.data.iter().zip(&y.data).map(|(g, y)| if *y > 0.0 { *g } else { 0.0 }).collect();
                out.push((*a, self.like(*a, d)));
            }
            Op::Sigmoid(a) => {
                let d = g.data.iter().zip(&y.data).map(|(g, y)| g * y * (1.0 - y)).collect();
                out.push((*a, self.like(*a, d)));
            }
            Op::SqrtEps(a) => {
                let d = g.data.iter().zip(&y.data).map(|(g, y)| g / (2.0 * y)).collect();
                out.push((*a, self.like(*a, d)));
            }
            Op::SoftmaxRows(a) => {
                let n = y.shape[1];
                let mut d = vec![0.0; y.len()];
                for ((dr, gr), yr) in d.chunks_exact_mut(n).zip(g.data.chunks_exact(n)).zip(y.data.chunks_exact(n)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                    for j in 0..n {
                        dr[j] = yr[j] * (gr[j] - dot);
                    }
                }
                out.push((*a, self.like(*a, d)));
            }
            Op::Reshape(a) => out.push((*a, self.like(*a, g.data.clone()))),
            Op::Permute3(a, perm) => {
                let (d0, d1, d2) = self.value(*a).dims3().unwrap();
                let d = [d0, d1, d2];
                let od = [d[perm[0]], d[perm[1]], d[perm[2]]];
                let in_strides = [d1 * d2, d2, 1];
                let s = [in_strides[perm[0]], in_strides[perm[1]], in_strides[perm[2]]];
                let mut dx = vec![0.0; g.len()];
                let mut o = 0;
                for i in 0..od[0] {
                    for j in 0..od[1] {
                        let base = i * s[0] + j * s[1];
                        for k in 0..od[2] {
                            dx[base + k * s[2]] = g.data[o];
                            o += 1;
                        }
                    }
                }
                out.push((*a, self.like(*a, dx)));
            }
            Op::Upsample2(a) => {
                let (c, h, w) = self.value(*a).dims3().unwrap();
                let (h2, w2) = (2 * h, 2 * w);
                let mut dx = vec![0.0; c * h * w];
                for ch in 0..c {
                    for yy in 0..h2 {
                        for xx in 0..w2 {
                            dx[(ch * h + yy / 2) * w + xx / 2] += g.data[(ch * h2 + yy) * w2 + xx];
                        }
                    }
                }
                out.push((*a, self.like(*a, dx)));
            }
            Op::Conv2d { x, w, b, geom, cols } => {
                let (k, p, co) = (geom.k(), geom.p(), geom.co);
                if self.ng(*w) {
                    let mut dw = vec![0.0; co * k];
                    gemm(co, p, k, &g.data, Layout::rm(p), cols, Layout::tr(p), &mut dw, 0.0);
                    out.push((*w, self.like(*w, dw)));
                }
                if self.ng(*b) {
                    let db = g.data.chunks_exact(p).map(|r| r.iter().sum()).collect();
                    out.push((*b, self.like(*b, db)));
                }
                if self.ng(*x) {
                    let mut dcols = vec![0.0; k * p];
                    gemm(k, co, p, &self.value(*w).data, Layout::tr(k), &g.data, Layout::rm(p), &mut dcols, 0.0);
                    out.push((*x, self.like(*x, col2im(&dcols, geom))));
                }
            }
            Op::TopkMask(a, keep) => {
                let d = g.data.iter().zip(keep).map(|(g, k)| if *k { *g } else { 0.0 }).collect();
                out.push((*a, self.like(*a, d)));
            }
            Op::Mse { a, b, weights, denom } => {
                if *denom > 0.0 {
                    let s = 2.0 * g.item() / denom;
                    let (va, vb) = (&self.value(*a).data, &self.value(*b).data);
                    let da: Vec<f64> = match weights {
                        None => va.iter().zip(vb).map(|(x, y)| s * (x - y)).collect(),
                        Some(w) => va.iter().zip(vb).zip(w.iter()).map(|((x, y), w)| s * w * (x - y)).collect(),
                    };
                    if self.ng(*b) {
                        out.push((*b, self.like(*b, da.iter().map(|v| -v).collect())));
                    }
                    if self.ng(*a) {
                        out.push((*a, self.like(*a, da)));
                    }
                }
            }
            Op::L1(a, b) => {
                let (va, vb) = (&self.value(*a).data, &self.value(*b).data);
                let s = g.item() / va.len().max(1) as f64;
                let da: Vec<f64> = va
                    .iter()
                    .zip(vb)
                    .map(|(x, y)| {
                        if x > y {
                            s
                        } else if x < y {
                            -s
                        } else {
                            0.0
                        }
                    })
                    .collect();
                if self.ng(*b) {
                    out.push((*b, self.like(*b, da.iter().map(|v| -v).collect())));
                }
                if self.ng(*a) {
                    out.push((*a, self.like(*a, da)));
                }
            }
            Op::Synthesize(rec) => out.push((rec.mag, self.like(rec.mag, rec.backward(&g.data)))),
            Op::FrameMag(rec) => {
                let len = self.value(rec.wave).len();
                out.push((rec.wave, self.like(rec.wave, rec.backward(&g.data, len))));
            }
        }
        out
    }
}

fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let p = g.p();
    let mut cols = vec![0.0; g.k() * p];
    for c in 0..g.ci {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let r = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[r * p..(r + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &x[(c * g.h + iy as usize) * g.w..(c * g.h + iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[oy * g.ow + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], g: &ConvGeom) -> Vec<f64> {
    let p = g.p();
    let mut x = vec![0.0; g.ci * g.h * g.w];
    for c in 0..g.ci {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let r = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[r * p..(r + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let row = (c * g.h + iy as usize) * g.w;
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            x[row + ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
    x
}
