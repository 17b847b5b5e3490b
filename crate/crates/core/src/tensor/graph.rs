use super::conv::{self, ConvGeom};
use super::{Tensor, EPS_NUM};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var),
    Scale(Var, f64),
    Neg(Var),
    Exp(Var),
    Ln(Var),
    Log2(Var),
    Sqrt(Var),
    ClampMin(Var, f64),
    LeakyRelu(Var, f64),
    Sum(Var, Vec<usize>),
    Mean(Var, Vec<usize>, f64),
    Softmax(Var, usize),
    LogSoftmax(Var, usize),
    Conv3d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeom,
    },
    Upsample2(Var),
    Concat(Vec<Var>),
    Reshape(Var),
    Expand(Var, usize),
    Select(Var, usize),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of one forward pass.
///
/// Nodes are stored in construction order, which is a topological order, so
/// backward is a single reverse sweep. A graph supports exactly one backward.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Option<Vec<Option<Vec<f64>>>>,
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

/// For reductions: maps every input flat index to its output flat index.
fn reduce_map(shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let keep: Vec<bool> = (0..shape.len()).map(|a| !axes.contains(&a)).collect();
    let out_shape: Vec<usize> = shape
        .iter()
        .zip(&keep)
        .filter_map(|(&d, &k)| k.then_some(d))
        .collect();
    let mut out_strides = vec![0usize; shape.len()];
    let mut acc = 1;
    for a in (0..shape.len()).rev() {
        if keep[a] {
            out_strides[a] = acc;
            acc *= shape[a];
        }
    }
    let n: usize = shape.iter().product();
    let mut map = Vec::with_capacity(n);
    let mut coord = vec![0usize; shape.len()];
    for _ in 0..n {
        map.push(coord.iter().zip(&out_strides).map(|(c, s)| c * s).sum());
        for a in (0..shape.len()).rev() {
            coord[a] += 1;
            if coord[a] < shape[a] {
                break;
            }
            coord[a] = 0;
        }
    }
    (out_shape, map)
}

/// Splits a shape around `axis` into (outer, extent, inner).
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn dims4(shape: &[usize], op: &'static str) -> Result<[usize; 4]> {
    if shape.len() != 4 {
        return Err(Error::invalid(format!("{op} expects a [C, X, Y, Z] tensor, got {shape:?}")));
    }
    Ok([shape[0], shape[1], shape[2], shape[3]])
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

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records `t` as a leaf; it is differentiable iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    /// Records a leaf that never receives gradient, taking ownership.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Leaf, false)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Copies a node's value out as a standalone tensor.
    pub fn value(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(&n.shape, n.value.clone()).expect("graph nodes are well formed")
    }

    pub fn item(&self, v: Var) -> Result<f64> {
        let n = &self.nodes[v.0];
        if n.value.len() != 1 {
            return Err(Error::NonScalarLoss(n.shape.clone()));
        }
        Ok(n.value[0])
    }

    /// A gradient-free copy of `v`'s current value.
    pub fn detach(&mut self, v: Var) -> Var {
        let n = &self.nodes[v.0];
        let (shape, value) = (n.shape.clone(), n.value.clone());
        self.push(shape, value, Op::Leaf, false)
    }

    fn binary(&self, op: &'static str, a: Var, b: Var) -> Result<(Vec<usize>, &[f64], &[f64])> {
        let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
        if na.shape != nb.shape {
            return Err(mismatch(op, &na.shape, &nb.shape));
        }
        Ok((na.shape.clone(), &na.value, &nb.value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, x, y) = self.binary("add", a, b)?;
        let v = x.iter().zip(y).map(|(p, q)| p + q).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(shape, v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, x, y) = self.binary("sub", a, b)?;
        let v = x.iter().zip(y).map(|(p, q)| p - q).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(shape, v, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, x, y) = self.binary("mul", a, b)?;
        let v = x.iter().zip(y).map(|(p, q)| p * q).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(shape, v, Op::Mul(a, b), rg))
    }

    /// `a / max(b, EPS_NUM)`. Denominators in this crate are nonnegative
    /// quantities (norms, counts, sums of probabilities).
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, x, y) = self.binary("div", a, b)?;
        let v = x.iter().zip(y).map(|(p, q)| p / q.max(EPS_NUM)).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(shape, v, Op::Div(a, b), rg))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let n = &self.nodes[a.0];
        let v = n.value.iter().map(|&x| f(x)).collect();
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        self.push(shape, v, op, rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, Op::Neg(a), |x| -x)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    /// Natural log of `max(a, EPS_NUM)`.
    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, Op::Ln(a), |x| x.max(EPS_NUM).ln())
    }

    /// Base-2 log of `max(a, EPS_NUM)`.
    pub fn log2(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log2(a), |x| x.max(EPS_NUM).log2())
    }

    /// Square root of `max(a, EPS_NUM)`.
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sqrt(a), |x| x.max(EPS_NUM).sqrt())
    }

    pub fn clamp_min(&mut self, a: Var, lo: f64) -> Var {
        self.unary(a, Op::ClampMin(a, lo), |x| x.max(lo))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(a, Op::LeakyRelu(a, slope), |x| if x > 0.0 { x } else { slope * x })
    }

    fn check_axes(&self, a: Var, axes: Option<&[usize]>) -> Result<Vec<usize>> {
        let shape = &self.nodes[a.0].shape;
        let axes: Vec<usize> = match axes {
            None => (0..shape.len()).collect(),
            Some(ax) => ax.to_vec(),
        };
        for &ax in &axes {
            if ax >= shape.len() {
                return Err(Error::Axis {
                    axis: ax,
                    shape: shape.clone(),
                });
            }
        }
        Ok(axes)
    }

    fn reduce_sum(&self, a: Var, axes: &[usize]) -> (Vec<usize>, Vec<f64>) {
        let n = &self.nodes[a.0];
        let (out_shape, map) = reduce_map(&n.shape, axes);
        let mut out = vec![0.0; out_shape.iter().product()];
        for (&o, &x) in map.iter().zip(&n.value) {
            out[o] += x;
        }
        (out_shape, out)
    }

    /// Sum over `axes` (all axes when `None`); reduced axes are removed.
    pub fn sum(&mut self, a: Var, axes: Option<&[usize]>) -> Result<Var> {
        let axes = self.check_axes(a, axes)?;
        let (shape, v) = self.reduce_sum(a, &axes);
        let rg = self.rg(&[a]);
        Ok(self.push(shape, v, Op::Sum(a, axes), rg))
    }

    pub fn mean(&mut self, a: Var, axes: Option<&[usize]>) -> Result<Var> {
        let axes = self.check_axes(a, axes)?;
        let count: usize = axes.iter().map(|&ax| self.nodes[a.0].shape[ax]).product();
        let inv = 1.0 / count as f64;
        let (shape, mut v) = self.reduce_sum(a, &axes);
        v.iter_mut().for_each(|x| *x *= inv);
        let rg = self.rg(&[a]);
        Ok(self.push(shape, v, Op::Mean(a, axes, inv), rg))
    }

    /// Softmax along `axis`, stabilized by subtracting the per-slice max.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.check_axes(a, Some(&[axis]))?;
        let n = &self.nodes[a.0];
        let (outer, ext, inner) = split_axis(&n.shape, axis);
        let mut out = vec![0.0; n.value.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |c: usize| (o * ext + c) * inner + i;
                let m = (0..ext).map(|c| n.value[at(c)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for c in 0..ext {
                    let e = (n.value[at(c)] - m).exp();
                    out[at(c)] = e;
                    z += e;
                }
                for c in 0..ext {
                    out[at(c)] /= z;
                }
            }
        }
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        Ok(self.push(shape, out, Op::Softmax(a, axis), rg))
    }

    /// `x − logsumexp(x)` along `axis`; exact where `ln(softmax)` would clamp.
    pub fn log_softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.check_axes(a, Some(&[axis]))?;
        let n = &self.nodes[a.0];
        let (outer, ext, inner) = split_axis(&n.shape, axis);
        let mut out = vec![0.0; n.value.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |c: usize| (o * ext + c) * inner + i;
                let m = (0..ext).map(|c| n.value[at(c)]).fold(f64::NEG_INFINITY, f64::max);
                let lse = m + (0..ext).map(|c| (n.value[at(c)] - m).exp()).sum::<f64>().ln();
                for c in 0..ext {
                    out[at(c)] = n.value[at(c)] - lse;
                }
            }
        }
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        Ok(self.push(shape, out, Op::LogSoftmax(a, axis), rg))
    }

    /// 3-D convolution of `input [C_in, X, Y, Z]` with `kernel [C_out, C_in, k, k, k]`
    /// plus an optional per-output-channel `bias [C_out]`.
    pub fn conv3d(&mut self, input: Var, kernel: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let [ci, x, y, z] = dims4(self.shape(input), "conv3d input")?;
        let ks = self.shape(kernel).to_vec();
        if ks.len() != 5 || ks[2] != ks[3] || ks[3] != ks[4] {
            return Err(Error::invalid(format!("conv3d kernel must be [C_out, C_in, k, k, k], got {ks:?}")));
        }
        if ks[1] != ci {
            return Err(mismatch("conv3d channels", self.shape(input), &ks));
        }
        if stride == 0 {
            return Err(Error::invalid("conv3d stride must be positive"));
        }
        let (co, k) = (ks[0], ks[2]);
        if let Some(b) = bias {
            if self.shape(b) != [co] {
                return Err(mismatch("conv3d bias", self.shape(b), &[co]));
            }
        }
        let ext = |e: usize| {
            super::conv_output_extent(e, k, stride, padding).ok_or_else(|| {
                Error::invalid(format!(
                    "conv3d: extent {e} with padding {padding} admits no placement of kernel {k}"
                ))
            })
        };
        let out = [ext(x)?, ext(y)?, ext(z)?];
        let geom = ConvGeom {
            ci,
            co,
            inp: [x, y, z],
            out,
            k,
            stride,
            pad: padding,
        };
        let value = conv::forward(&geom, self.data(input), self.data(kernel), bias.map(|b| self.data(b)));
        let mut deps = vec![input, kernel];
        deps.extend(bias);
        let rg = self.rg(&deps);
        Ok(self.push(
            vec![co, out[0], out[1], out[2]],
            value,
            Op::Conv3d {
                input,
                kernel,
                bias,
                geom,
            },
            rg,
        ))
    }

    /// Nearest-neighbour upsampling by 2 along every spatial axis of `[C, X, Y, Z]`.
    pub fn upsample2(&mut self, a: Var) -> Result<Var> {
        let [c, x, y, z] = dims4(self.shape(a), "upsample2")?;
        let src = self.data(a);
        let (ox, oy, oz) = (2 * x, 2 * y, 2 * z);
        let mut out = vec![0.0; c * ox * oy * oz];
        for ch in 0..c {
            for i in 0..ox {
                for j in 0..oy {
                    let srow = ((ch * x + i / 2) * y + j / 2) * z;
                    let drow = ((ch * ox + i) * oy + j) * oz;
                    for k in 0..oz {
                        out[drow + k] = src[srow + k / 2];
                    }
                }
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(vec![c, ox, oy, oz], out, Op::Upsample2(a), rg))
    }

    /// Concatenates along axis 0; trailing extents must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut lead = 0;
        let mut out = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[1..] != tail[..] {
                return Err(mismatch("concat", self.shape(*first), s));
            }
            lead += s[0];
            out.extend_from_slice(self.data(p));
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        let rg = self.rg(parts);
        Ok(self.push(shape, out, Op::Concat(parts.to_vec()), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.data(a).len() {
            return Err(mismatch("reshape", self.shape(a), shape));
        }
        let v = self.data(a).to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(shape.to_vec(), v, Op::Reshape(a), rg))
    }

    /// Repeats `a` along a new leading axis of extent `n`.
    pub fn expand(&mut self, a: Var, n: usize) -> Result<Var> {
        if n == 0 {
            return Err(Error::invalid("expand to zero extent"));
        }
        let src = self.data(a);
        let mut out = Vec::with_capacity(src.len() * n);
        for _ in 0..n {
            out.extend_from_slice(src);
        }
        let mut shape = vec![n];
        shape.extend_from_slice(self.shape(a));
        let rg = self.rg(&[a]);
        Ok(self.push(shape, out, Op::Expand(a, n), rg))
    }

    /// Slice `index` of axis 0, dropping that axis.
    pub fn select(&mut self, a: Var, index: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.is_empty() || index >= s[0] {
            return Err(Error::Axis { axis: index, shape: s });
        }
        let inner: usize = s[1..].iter().product();
        let v = self.data(a)[index * inner..(index + 1) * inner].to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(s[1..].to_vec(), v, Op::Select(a, index), rg))
    }

    /// Reverse sweep from a single-element `loss`.
    ///
    /// Afterwards [`Graph::grad`] returns `∂loss/∂leaf` for every
    /// differentiable leaf reachable from the loss.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.grads.is_some() {
            return Err(Error::BackwardTwice);
        }
        let ln = &self.nodes[loss.0];
        if ln.value.len() != 1 {
            return Err(Error::NonScalarLoss(ln.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        // Only differentiable leaves keep their gradient.
        for (i, n) in self.nodes.iter().enumerate() {
            if !(n.requires_grad && matches!(n.op, Op::Leaf)) {
                grads[i] = None;
            }
        }
        self.grads = Some(grads);
        Ok(())
    }

    /// Gradient of the last backward's loss with respect to a leaf.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.as_ref()?.get(v.0)?.as_deref()
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let val = |v: Var| self.nodes[v.0].value.as_slice();
        let mut acc = |v: Var, f: &dyn Fn(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            f(slot);
        };
        let ew = |slot: &mut [f64], f: &dyn Fn(usize) -> f64| {
            for (j, s) in slot.iter_mut().enumerate() {
                *s += f(j);
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &|s| ew(s, &|j| g[j]));
                acc(*b, &|s| ew(s, &|j| g[j]));
            }
            Op::Sub(a, b) => {
                acc(*a, &|s| ew(s, &|j| g[j]));
                acc(*b, &|s| ew(s, &|j| -g[j]));
            }
            Op::Mul(a, b) => {
                let (x, y) = (val(*a), val(*b));
                acc(*a, &|s| ew(s, &|j| g[j] * y[j]));
                acc(*b, &|s| ew(s, &|j| g[j] * x[j]));
            }
            Op::Div(a, b) => {
                let (x, y) = (val(*a), val(*b));
                acc(*a, &|s| ew(s, &|j| g[j] / y[j].max(EPS_NUM)));
                acc(*b, &|s| {
                    ew(s, &|j| {
                        if y[j] > EPS_NUM {
                            -g[j] * x[j] / (y[j] * y[j])
                        } else {
                            0.0
                        }
                    })
                });
            }
            Op::AddScalar(a) => acc(*a, &|s| ew(s, &|j| g[j])),
            Op::Scale(a, c) => acc(*a, &|s| ew(s, &|j| g[j] * c)),
            Op::Neg(a) => acc(*a, &|s| ew(s, &|j| -g[j])),
            Op::Exp(a) => {
                let y = &node.value;
                acc(*a, &|s| ew(s, &|j| g[j] * y[j]));
            }
            Op::Ln(a) => {
                let x = val(*a);
                acc(*a, &|s| ew(s, &|j| if x[j] > EPS_NUM { g[j] / x[j] } else { 0.0 }));
            }
            Op::Log2(a) => {
                let x = val(*a);
                let k = std::f64::consts::LN_2;
                acc(*a, &|s| ew(s, &|j| if x[j] > EPS_NUM { g[j] / (x[j] * k) } else { 0.0 }));
            }
            Op::Sqrt(a) => {
                let x = val(*a);
                let y = &node.value;
                acc(*a, &|s| ew(s, &|j| if x[j] > EPS_NUM { 0.5 * g[j] / y[j] } else { 0.0 }));
            }
            Op::ClampMin(a, lo) => {
                let x = val(*a);
                acc(*a, &|s| ew(s, &|j| if x[j] > *lo { g[j] } else { 0.0 }));
            }
            Op::LeakyRelu(a, slope) => {
                let x = val(*a);
                acc(*a, &|s| ew(s, &|j| if x[j] > 0.0 { g[j] } else { slope * g[j] }));
            }
            Op::Sum(a, axes) | Op::Mean(a, axes, _) => {
                let scale = if let Op::Mean(_, _, inv) = node.op { inv } else { 1.0 };
                let (_, map) = reduce_map(&self.nodes[a.0].shape, axes);
                acc(*a, &|s| ew(s, &|j| g[map[j]] * scale));
            }
            Op::Softmax(a, axis) => {
                let y = &node.value;
                let (outer, ext, inner) = split_axis(&node.shape, *axis);
                acc(*a, &|s| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |c: usize| (o * ext + c) * inner + i;
                            let dot: f64 = (0..ext).map(|c| g[at(c)] * y[at(c)]).sum();
                            for c in 0..ext {
                                s[at(c)] += y[at(c)] * (g[at(c)] - dot);
                            }
                        }
                    }
                });
            }
            Op::LogSoftmax(a, axis) => {
                let y = &node.value;
                let (outer, ext, inner) = split_axis(&node.shape, *axis);
                acc(*a, &|s| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |c: usize| (o * ext + c) * inner + i;
                            let total: f64 = (0..ext).map(|c| g[at(c)]).sum();
                            for c in 0..ext {
                                s[at(c)] += g[at(c)] - y[at(c)].exp() * total;
                            }
                        }
                    }
                });
            }
            Op::Conv3d {
                input,
                kernel,
                bias,
                geom,
            } => {
                let (x, w) = (val(*input), val(*kernel));
                let need = |v: Var| self.nodes[v.0].requires_grad;
                let mut gin = need(*input).then(|| vec![0.0; x.len()]);
                let mut gker = need(*kernel).then(|| vec![0.0; w.len()]);
                let mut gb = bias.filter(|b| need(*b)).map(|_| vec![0.0; geom.co]);
                conv::backward(geom, x, w, g, gin.as_deref_mut(), gker.as_deref_mut(), gb.as_deref_mut());
                if let Some(d) = gin {
                    acc(*input, &|s| ew(s, &|j| d[j]));
                }
                if let Some(d) = gker {
                    acc(*kernel, &|s| ew(s, &|j| d[j]));
                }
                if let (Some(b), Some(d)) = (bias, gb) {
                    acc(*b, &|s| ew(s, &|j| d[j]));
                }
            }
            Op::Upsample2(a) => {
                let [c, x, y, z] = [
                    self.nodes[a.0].shape[0],
                    self.nodes[a.0].shape[1],
                    self.nodes[a.0].shape[2],
                    self.nodes[a.0].shape[3],
                ];
                let (oy, oz) = (2 * y, 2 * z);
                acc(*a, &|s| {
                    for ch in 0..c {
                        for i in 0..2 * x {
                            for j in 0..oy {
                                let srow = ((ch * x + i / 2) * y + j / 2) * z;
                                let grow = ((ch * 2 * x + i) * oy + j) * oz;
                                for k in 0..oz {
                                    s[srow + k / 2] += g[grow + k];
                                }
                            }
                        }
                    }
                });
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.nodes[p.0].value.len();
                    acc(p, &|s| ew(s, &|j| g[off + j]));
                    off += n;
                }
            }
            Op::Reshape(a) => acc(*a, &|s| ew(s, &|j| g[j])),
            Op::Expand(a, n) => {
                let len = self.nodes[a.0].value.len();
                acc(*a, &|s| {
                    for r in 0..*n {
                        ew(s, &|j| g[r * len + j]);
                    }
                });
            }
            Op::Select(a, index) => {
                let len = node.value.len();
                acc(*a, &|s| {
                    for j in 0..len {
                        s[index * len + j] += g[j];
                    }
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn elementwise_values() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::from_vec(vec![0.0, 1.0]));
        let e = g.exp(a);
        close(g.data(e), &[1.0, std::f64::consts::E], 1e-15);
        let h = g.constant(Tensor::from_vec(vec![0.5, 1.0]));
        let l = g.log2(h);
        assert_eq!(g.data(l), &[-1.0, 0.0]);
    }

    #[test]
    fn product_rule() {
        let mut g = Graph::new();
        let a = g.leaf(&Tensor::from_vec(vec![2.0]).with_grad());
        let b = g.leaf(&Tensor::from_vec(vec![3.0]).with_grad());
        let p = g.mul(a, b).unwrap();
        let l = g.sum(p, None).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(a), Some(&[3.0][..]));
        assert_eq!(g.grad(b), Some(&[2.0][..]));
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2]));
        let b = g.constant(Tensor::zeros(&[3]));
        match g.add(a, b) {
            Err(Error::ShapeMismatch { left, right, .. }) => {
                assert_eq!(left, vec![2]);
                assert_eq!(right, vec![3]);
            }
            other => panic!("expected mismatch, got {other:?}"),
        }
    }

    #[test]
    fn reductions() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let s = g.sum(a, None).unwrap();
        assert_eq!(g.item(s).unwrap(), 6.0);
        let x = g.leaf(&Tensor::from_vec(vec![2.0, 4.0]).with_grad());
        let m = g.mean(x, None).unwrap();
        assert_eq!(g.item(m).unwrap(), 3.0);
        g.backward(m).unwrap();
        assert_eq!(g.grad(x), Some(&[0.5, 0.5][..]));
    }

    #[test]
    fn partial_axis_reduction() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let s0 = g.sum(a, Some(&[0])).unwrap();
        assert_eq!(g.data(s0), &[5.0, 7.0, 9.0]);
        let s1 = g.mean(a, Some(&[1])).unwrap();
        assert_eq!(g.data(s1), &[2.0, 5.0]);
        assert!(matches!(g.sum(a, Some(&[2])), Err(Error::Axis { .. })));
    }

    #[test]
    fn softmax_symmetry_and_overflow() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::new(&[2, 1], vec![0.0, 0.0]).unwrap());
        let s = g.softmax(a, 0).unwrap();
        assert_eq!(g.data(s), &[0.5, 0.5]);
        let b = g.constant(Tensor::new(&[2, 1], vec![1000.0, 0.0]).unwrap());
        let s = g.softmax(b, 0).unwrap();
        assert_eq!(g.data(s)[0], 1.0);
        assert!(g.data(s)[1] >= 0.0 && g.data(s)[1] < 1e-300);
    }

    #[test]
    fn backward_rules() {
        let mut g = Graph::new();
        let x = g.leaf(&Tensor::from_vec(vec![1.0, 1.0, 1.0]).with_grad());
        let s = g.sum(x, None).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x), Some(&[1.0, 1.0, 1.0][..]));
        assert!(matches!(g.backward(s), Err(Error::BackwardTwice)));

        let mut g = Graph::new();
        let x = g.leaf(&Tensor::from_vec(vec![2.0]).with_grad());
        let sq = g.mul(x, x).unwrap();
        let l = g.sum(sq, None).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x), Some(&[4.0][..]));

        let mut g = Graph::new();
        let x = g.leaf(&Tensor::from_vec(vec![2.0, 1.0]).with_grad());
        assert!(matches!(g.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn constants_never_get_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(&Tensor::from_vec(vec![2.0]).with_grad());
        let c = g.constant(Tensor::from_vec(vec![5.0]));
        let y = g.mul(x, c).unwrap();
        let l = g.sum(y, None).unwrap();
        g.backward(l).unwrap();
        assert!(g.grad(c).is_none());
        assert!(g.grad(y).is_none());
        assert_eq!(g.grad(x), Some(&[5.0][..]));
    }

    #[test]
    fn conv_examples() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(&[1, 1, 1, 1], vec![2.0]).unwrap());
        let w = g.constant(Tensor::new(&[1, 1, 1, 1, 1], vec![3.0]).unwrap());
        let y = g.conv3d(x, w, None, 1, 0).unwrap();
        assert_eq!(g.data(y), &[6.0]);

        let x = g.constant(Tensor::full(&[1, 3, 3, 3], 1.0));
        let w = g.constant(Tensor::full(&[1, 1, 3, 3, 3], 1.0));
        let y = g.conv3d(x, w, None, 1, 1).unwrap();
        assert_eq!(g.shape(y), &[1, 3, 3, 3]);
        assert_eq!(g.data(y)[13], 27.0);
        assert_eq!(g.data(y)[0], 8.0);

        let w = g.constant(Tensor::full(&[1, 2, 3, 3, 3], 1.0));
        assert!(matches!(g.conv3d(x, w, None, 1, 1), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut g = Graph::new();
        let data: Vec<f64> = (0..2 * 27).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = g.constant(Tensor::new(&[2, 3, 3, 3], data.clone()).unwrap());
        let w = g.constant(Tensor::new(&[2, 2, 1, 1, 1], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let y = g.conv3d(x, w, None, 1, 0).unwrap();
        assert_eq!(g.data(y), &data[..]);
    }

    #[test]
    fn structural_ops() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::new(&[1, 1, 1, 2], vec![1.0, 2.0]).unwrap());
        let u = g.upsample2(a).unwrap();
        assert_eq!(g.shape(u), &[1, 2, 2, 4]);
        assert_eq!(&g.data(u)[..4], &[1.0, 1.0, 2.0, 2.0]);
        let c = g.concat(&[a, a]).unwrap();
        assert_eq!(g.shape(c), &[2, 1, 1, 2]);
        let s = g.select(c, 1).unwrap();
        assert_eq!(g.shape(s), &[1, 1, 2]);
        let e = g.expand(s, 3).unwrap();
        assert_eq!(g.shape(e), &[3, 1, 1, 2]);
    }
}
