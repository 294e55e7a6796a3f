//! Append-only computation record and the differentiable primitive set.
//!
//! A [`Graph`] lives for one evaluation. Leaves are either constants or
//! differentiable; every op result requires a gradient iff one of its inputs
//! does. [`Graph::backward`] walks the record once in reverse order.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use super::{AutodiffError, Tensor};

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MatMul(usize, usize),
    Conv2d {
        input: usize,
        weight: usize,
        bias: usize,
    },
    Sigmoid(usize),
    Tanh(usize),
    LeakyRelu(usize, f64),
    Mean(usize),
    Sum(usize),
    SpatialMean(usize),
    Square(usize),
    Sqrt(usize),
    Scale(usize, f64),
    Concat(Vec<usize>),
    Slice {
        input: usize,
        start: usize,
    },
    Mask(usize, Rc<Vec<bool>>),
    Reshape(usize),
}

#[derive(Debug)]
struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Computation record for a single forward/backward evaluation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a tensor recorded in a [`Graph`].
#[derive(Debug, Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

/// Gradients of a scalar loss with respect to every differentiable leaf.
#[derive(Debug, Clone)]
pub struct Gradients {
    by_node: BTreeMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.by_node.get(&var.id)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.by_node.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.by_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_node.is_empty()
    }
}

fn mismatch(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        lhs: lhs.shape().to_vec(),
        rhs: rhs.shape().to_vec(),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// Differentiable leaf: receives an entry in the gradient map.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf: never differentiated.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn grad_of(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn check_owner(&self, var: Var<'_>) {
        assert!(
            std::ptr::eq(self, var.graph),
            "variable belongs to a different graph"
        );
    }

    /// Reverse-mode pass from a single-element `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, AutodiffError> {
        self.check_owner(loss);
        let nodes = self.nodes.borrow();
        let loss_node = &nodes[loss.id];
        if loss_node.value.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(
                loss_node.value.shape().to_vec(),
            ));
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        if loss_node.requires_grad {
            grads[loss.id] = Some(vec![1.0]);
        }

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if let Op::Leaf = node.op {
                grads[id] = Some(g);
                continue;
            }
            backprop_node(&nodes, node, &g, &mut grads);
        }

        let by_node = nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.requires_grad && matches!(n.op, Op::Leaf))
            .map(|(id, n)| {
                let shape = n.value.shape().to_vec();
                let g = match grads.get_mut(id).and_then(Option::take) {
                    Some(data) => Tensor::from_op("backward", shape, data)?,
                    None => Tensor::zeros(&shape),
                };
                Ok((id, g))
            })
            .collect::<Result<_, AutodiffError>>()?;
        Ok(Gradients { by_node })
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], nodes: &[Node], id: usize, contrib: Vec<f64>) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(existing) => {
            for (e, c) in existing.iter_mut().zip(contrib) {
                *e += c;
            }
        }
        slot @ None => *slot = Some(contrib),
    }
}

fn backprop_node(nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let val = |id: usize| -> &Tensor { &nodes[id].value };
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(grads, nodes, *a, g.to_vec());
            accumulate(grads, nodes, *b, g.to_vec());
        }
        Op::Sub(a, b) => {
            accumulate(grads, nodes, *a, g.to_vec());
            accumulate(grads, nodes, *b, g.iter().map(|v| -v).collect());
        }
        Op::Mul(a, b) => {
            let (va, vb) = (val(*a).data(), val(*b).data());
            accumulate(
                grads,
                nodes,
                *a,
                g.iter().zip(vb).map(|(g, y)| g * y).collect(),
            );
            accumulate(
                grads,
                nodes,
                *b,
                g.iter().zip(va).map(|(g, x)| g * x).collect(),
            );
        }
        Op::MatMul(a, b) => {
            let (ta, tb) = (val(*a), val(*b));
            let (m, k) = (ta.shape()[0], ta.shape()[1]);
            let n = tb.shape()[1];
            if nodes[*a].requires_grad {
                // dA = G · Bᵀ
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for j in 0..n {
                        let gij = g[i * n + j];
                        if gij == 0.0 {
                            continue;
                        }
                        for p in 0..k {
                            da[i * k + p] += gij * tb.data()[p * n + j];
                        }
                    }
                }
                accumulate(grads, nodes, *a, da);
            }
            if nodes[*b].requires_grad {
                // dB = Aᵀ · G
                let mut db = vec![0.0; k * n];
                for i in 0..m {
                    for p in 0..k {
                        let aip = ta.data()[i * k + p];
                        for j in 0..n {
                            db[p * n + j] += aip * g[i * n + j];
                        }
                    }
                }
                accumulate(grads, nodes, *b, db);
            }
        }
        Op::Conv2d {
            input,
            weight,
            bias,
        } => {
            let (x, w) = (val(*input), val(*weight));
            let geom = ConvGeometry::of(x.shape(), w.shape());
            if nodes[*input].requires_grad {
                accumulate(grads, nodes, *input, geom.input_grad(w.data(), g));
            }
            if nodes[*weight].requires_grad {
                accumulate(grads, nodes, *weight, geom.weight_grad(x.data(), g));
            }
            if nodes[*bias].requires_grad {
                let plane = geom.height * geom.width;
                let db = g.chunks(plane).map(|c| c.iter().sum()).collect();
                accumulate(grads, nodes, *bias, db);
            }
        }
        Op::Sigmoid(a) => {
            let out = node.value.data();
            let d = g.iter().zip(out).map(|(g, s)| g * s * (1.0 - s)).collect();
            accumulate(grads, nodes, *a, d);
        }
        Op::Tanh(a) => {
            let out = node.value.data();
            let d = g.iter().zip(out).map(|(g, t)| g * (1.0 - t * t)).collect();
            accumulate(grads, nodes, *a, d);
        }
        Op::LeakyRelu(a, slope) => {
            let x = val(*a).data();
            let d = g
                .iter()
                .zip(x)
                .map(|(g, &x)| if x > 0.0 { *g } else { g * slope })
                .collect();
            accumulate(grads, nodes, *a, d);
        }
        Op::Mean(a) => {
            let n = val(*a).len();
            accumulate(grads, nodes, *a, vec![g[0] / n as f64; n]);
        }
        Op::Sum(a) => {
            let n = val(*a).len();
            accumulate(grads, nodes, *a, vec![g[0]; n]);
        }
        Op::SpatialMean(a) => {
            let x = val(*a);
            let plane = x.shape()[1] * x.shape()[2];
            let d = g
                .iter()
                .flat_map(|&gc| std::iter::repeat_n(gc / plane as f64, plane))
                .collect();
            accumulate(grads, nodes, *a, d);
        }
        Op::Square(a) => {
            let x = val(*a).data();
            let d = g.iter().zip(x).map(|(g, x)| 2.0 * g * x).collect();
            accumulate(grads, nodes, *a, d);
        }
        Op::Sqrt(a) => {
            let out = node.value.data();
            let d = g
                .iter()
                .zip(out)
                .map(|(g, r)| if *r > 0.0 { g / (2.0 * r) } else { 0.0 })
                .collect();
            accumulate(grads, nodes, *a, d);
        }
        Op::Scale(a, c) => {
            accumulate(grads, nodes, *a, g.iter().map(|v| v * c).collect());
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            for &p in parts {
                let n = val(p).len();
                accumulate(grads, nodes, p, g[offset..offset + n].to_vec());
                offset += n;
            }
        }
        Op::Slice { input, start } => {
            let x = val(*input);
            let row: usize = x.shape()[1..].iter().product();
            let mut d = vec![0.0; x.len()];
            d[start * row..start * row + g.len()].copy_from_slice(g);
            accumulate(grads, nodes, *input, d);
        }
        Op::Mask(a, mask) => {
            let d = g
                .iter()
                .zip(mask.iter())
                .map(|(g, &keep)| if keep { *g } else { 0.0 })
                .collect();
            accumulate(grads, nodes, *a, d);
        }
        Op::Reshape(a) => accumulate(grads, nodes, *a, g.to_vec()),
    }
}

/// Stride-1, zero "same" padded 2-D convolution over `[C, H, W]` inputs.
#[derive(Debug, Clone, Copy)]
struct ConvGeometry {
    in_channels: usize,
    out_channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
}

impl ConvGeometry {
    fn of(input: &[usize], weight: &[usize]) -> Self {
        Self {
            in_channels: input[0],
            height: input[1],
            width: input[2],
            out_channels: weight[0],
            kernel: weight[2],
        }
    }

    /// Overlap of output rows/cols with input rows/cols for kernel tap `d`.
    fn range(&self, d: usize, extent: usize) -> (usize, usize, isize) {
        let pad = (self.kernel / 2) as isize;
        let shift = d as isize - pad;
        let lo = (-shift).max(0) as usize;
        let hi = (extent as isize - shift).min(extent as isize).max(0) as usize;
        (lo, hi, shift)
    }

    fn forward(&self, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
        let Self {
            in_channels: ci,
            out_channels: co,
            height: h,
            width: wd,
            kernel: k,
        } = *self;
        let plane = h * wd;
        let mut out = vec![0.0; co * plane];
        for o in 0..co {
            let out_plane = &mut out[o * plane..(o + 1) * plane];
            out_plane.fill(b[o]);
            for c in 0..ci {
                let in_plane = &x[c * plane..(c + 1) * plane];
                for dy in 0..k {
                    let (y0, y1, sy) = self.range(dy, h);
                    for dx in 0..k {
                        let (x0, x1, sx) = self.range(dx, wd);
                        let wv = w[((o * ci + c) * k + dy) * k + dx];
                        for y in y0..y1 {
                            let iy = (y as isize + sy) as usize;
                            let src = &in_plane[iy * wd..(iy + 1) * wd];
                            let dst = &mut out_plane[y * wd..(y + 1) * wd];
                            for xx in x0..x1 {
                                dst[xx] += wv * src[(xx as isize + sx) as usize];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn input_grad(&self, w: &[f64], g: &[f64]) -> Vec<f64> {
        let Self {
            in_channels: ci,
            out_channels: co,
            height: h,
            width: wd,
            kernel: k,
        } = *self;
        let plane = h * wd;
        let mut dx_all = vec![0.0; ci * plane];
        for o in 0..co {
            let g_plane = &g[o * plane..(o + 1) * plane];
            for c in 0..ci {
                let d_plane = &mut dx_all[c * plane..(c + 1) * plane];
                for dy in 0..k {
                    let (y0, y1, sy) = self.range(dy, h);
                    for dx in 0..k {
                        let (x0, x1, sx) = self.range(dx, wd);
                        let wv = w[((o * ci + c) * k + dy) * k + dx];
                        for y in y0..y1 {
                            let iy = (y as isize + sy) as usize;
                            for xx in x0..x1 {
                                d_plane[iy * wd + (xx as isize + sx) as usize] +=
                                    wv * g_plane[y * wd + xx];
                            }
                        }
                    }
                }
            }
        }
        dx_all
    }

    fn weight_grad(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        let Self {
            in_channels: ci,
            out_channels: co,
            height: h,
            width: wd,
            kernel: k,
        } = *self;
        let plane = h * wd;
        let mut dw = vec![0.0; co * ci * k * k];
        for o in 0..co {
            let g_plane = &g[o * plane..(o + 1) * plane];
            for c in 0..ci {
                let in_plane = &x[c * plane..(c + 1) * plane];
                for dy in 0..k {
                    let (y0, y1, sy) = self.range(dy, h);
                    for dx in 0..k {
                        let (x0, x1, sx) = self.range(dx, wd);
                        let mut acc = 0.0;
                        for y in y0..y1 {
                            let iy = (y as isize + sy) as usize;
                            for xx in x0..x1 {
                                acc += in_plane[iy * wd + (xx as isize + sx) as usize]
                                    * g_plane[y * wd + xx];
                            }
                        }
                        dw[((o * ci + c) * k + dy) * k + dx] += acc;
                    }
                }
            }
        }
        dw
    }
}

impl<'g> Var<'g> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.grad_of(self.id)
    }

    fn unary(self, op: Op, value: Tensor) -> Var<'g> {
        let requires = self.requires_grad();
        self.graph.push(value, op, requires)
    }

    fn binary(self, other: Var<'g>, op: Op, value: Tensor) -> Var<'g> {
        self.graph.check_owner(other);
        let requires = self.requires_grad() || other.requires_grad();
        self.graph.push(value, op, requires)
    }

    fn zip_same(
        self,
        other: Var<'g>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, AutodiffError> {
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(mismatch(name, &a, &b));
        }
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::from_op(name, a.shape().to_vec(), data)
    }

    /// Elementwise sum; shapes must match exactly.
    pub fn add(self, other: Var<'g>) -> Result<Var<'g>, AutodiffError> {
        let v = self.zip_same(other, "add", |a, b| a + b)?;
        Ok(self.binary(other, Op::Add(self.id, other.id), v))
    }

    /// Elementwise difference; shapes must match exactly.
    pub fn sub(self, other: Var<'g>) -> Result<Var<'g>, AutodiffError> {
        let v = self.zip_same(other, "sub", |a, b| a - b)?;
        Ok(self.binary(other, Op::Sub(self.id, other.id), v))
    }

    /// Elementwise product; shapes must match exactly.
    pub fn mul(self, other: Var<'g>) -> Result<Var<'g>, AutodiffError> {
        let v = self.zip_same(other, "mul", |a, b| a * b)?;
        Ok(self.binary(other, Op::Mul(self.id, other.id), v))
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(self, other: Var<'g>) -> Result<Var<'g>, AutodiffError> {
        let (a, b) = (self.value(), other.value());
        if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(mismatch("matmul", &a, &b));
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = a.data()[i * k + p];
                let row = &b.data()[p * n..(p + 1) * n];
                for (o, bv) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                    *o += aip * bv;
                }
            }
        }
        let v = Tensor::from_op("matmul", vec![m, n], out)?;
        Ok(self.binary(other, Op::MatMul(self.id, other.id), v))
    }

    /// Convolution of a `[C_in, H, W]` input with `[C_out, C_in, K, K]`
    /// weights (odd K) plus a `[C_out]` bias; stride 1, zero "same" padding.
    pub fn conv2d(self, weight: Var<'g>, bias: Var<'g>) -> Result<Var<'g>, AutodiffError> {
        self.graph.check_owner(weight);
        self.graph.check_owner(bias);
        let (x, w, b) = (self.value(), weight.value(), bias.value());
        let xs = x.shape();
        let ws = w.shape();
        if xs.len() != 3 || ws.len() != 4 || ws[1] != xs[0] || ws[2] != ws[3] || ws[2] % 2 == 0 {
            return Err(mismatch("conv2d", &x, &w));
        }
        if b.shape() != [ws[0]] {
            return Err(mismatch("conv2d bias", &w, &b));
        }
        let geom = ConvGeometry::of(xs, ws);
        let out = geom.forward(x.data(), w.data(), b.data());
        let v = Tensor::from_op("conv2d", vec![ws[0], xs[1], xs[2]], out)?;
        let requires = self.requires_grad() || weight.requires_grad() || bias.requires_grad();
        Ok(self.graph.push(
            v,
            Op::Conv2d {
                input: self.id,
                weight: weight.id,
                bias: bias.id,
            },
            requires,
        ))
    }

    pub fn sigmoid(self) -> Result<Var<'g>, AutodiffError> {
        let v = self.value().map(|x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        })?;
        Ok(self.unary(Op::Sigmoid(self.id), v))
    }

    pub fn tanh(self) -> Result<Var<'g>, AutodiffError> {
        let v = self.value().map(f64::tanh)?;
        Ok(self.unary(Op::Tanh(self.id), v))
    }

    /// `x` for positive inputs, `slope * x` otherwise.
    pub fn leaky_relu(self, slope: f64) -> Result<Var<'g>, AutodiffError> {
        let v = self.value().map(|x| if x > 0.0 { x } else { slope * x })?;
        Ok(self.unary(Op::LeakyRelu(self.id, slope), v))
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean(self) -> Result<Var<'g>, AutodiffError> {
        let x = self.value();
        let v = Tensor::from_op(
            "mean",
            vec![1],
            vec![x.data().iter().sum::<f64>() / x.len() as f64],
        )?;
        Ok(self.unary(Op::Mean(self.id), v))
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(self) -> Result<Var<'g>, AutodiffError> {
        let x = self.value();
        let v = Tensor::from_op("sum", vec![1], vec![x.data().iter().sum()])?;
        Ok(self.unary(Op::Sum(self.id), v))
    }

    /// Per-channel mean of a `[C, H, W]` tensor, giving `[C]`.
    pub fn spatial_mean(self) -> Result<Var<'g>, AutodiffError> {
        let x = self.value();
        if x.shape().len() != 3 {
            return Err(AutodiffError::RankMismatch {
                op: "spatial_mean",
                expected: 3,
                shape: x.shape().to_vec(),
            });
        }
        let plane = x.shape()[1] * x.shape()[2];
        let data = x
            .data()
            .chunks(plane)
            .map(|c| c.iter().sum::<f64>() / plane as f64)
            .collect();
        let v = Tensor::from_op("spatial_mean", vec![x.shape()[0]], data)?;
        Ok(self.unary(Op::SpatialMean(self.id), v))
    }

    pub fn square(self) -> Result<Var<'g>, AutodiffError> {
        let v = self.value().map(|x| x * x)?;
        Ok(self.unary(Op::Square(self.id), v))
    }

    /// Square root; the derivative at exactly zero is taken as zero.
    pub fn sqrt(self) -> Result<Var<'g>, AutodiffError> {
        let x = self.value();
        if let Some(index) = x.data().iter().position(|&v| v < 0.0) {
            return Err(AutodiffError::Domain { op: "sqrt", index });
        }
        let v = x.map(f64::sqrt)?;
        Ok(self.unary(Op::Sqrt(self.id), v))
    }

    /// Multiplication by a constant.
    pub fn scale(self, factor: f64) -> Result<Var<'g>, AutodiffError> {
        let v = self.value().map(|x| x * factor)?;
        Ok(self.unary(Op::Scale(self.id, factor), v))
    }

    /// Concatenation along the leading axis; trailing dimensions must agree.
    pub fn concat(parts: &[Var<'g>]) -> Result<Var<'g>, AutodiffError> {
        let first = parts.first().ok_or(AutodiffError::EmptyConcat)?;
        let graph = first.graph;
        let head = first.value();
        let trailing = head.shape()[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        let mut requires = false;
        for p in parts {
            graph.check_owner(*p);
            let v = p.value();
            if v.shape()[1..] != trailing[..] {
                return Err(mismatch("concat", &head, &v));
            }
            rows += v.shape()[0];
            data.extend_from_slice(v.data());
            requires |= p.requires_grad();
        }
        let mut shape = vec![rows];
        shape.extend(trailing);
        let v = Tensor::from_op("concat", shape, data)?;
        let ids = parts.iter().map(|p| p.id).collect();
        Ok(graph.push(v, Op::Concat(ids), requires))
    }

    /// Rows `start..end` along the leading axis.
    pub fn slice(self, start: usize, end: usize) -> Result<Var<'g>, AutodiffError> {
        let x = self.value();
        if start >= end || end > x.shape()[0] {
            return Err(AutodiffError::SliceBounds {
                start,
                end,
                shape: x.shape().to_vec(),
            });
        }
        let row: usize = x.shape()[1..].iter().product();
        let mut shape = x.shape().to_vec();
        shape[0] = end - start;
        let v = Tensor::from_op("slice", shape, x.data()[start * row..end * row].to_vec())?;
        Ok(self.unary(
            Op::Slice {
                input: self.id,
                start,
            },
            v,
        ))
    }

    /// Keeps entries where `keep` is true and zeroes the rest.
    pub fn mask(self, keep: Vec<bool>) -> Result<Var<'g>, AutodiffError> {
        let x = self.value();
        if keep.len() != x.len() {
            return Err(AutodiffError::LengthMismatch {
                shape: x.shape().to_vec(),
                len: keep.len(),
            });
        }
        let data = x
            .data()
            .iter()
            .zip(&keep)
            .map(|(&v, &k)| if k { v } else { 0.0 })
            .collect();
        let v = Tensor::from_op("mask", x.shape().to_vec(), data)?;
        Ok(self.unary(Op::Mask(self.id, Rc::new(keep)), v))
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Var<'g>, AutodiffError> {
        let v = self.value().reshaped(shape)?;
        Ok(self.unary(Op::Reshape(self.id), v))
    }

    /// `mean((self - target)^2)`.
    pub fn mse(self, target: Var<'g>) -> Result<Var<'g>, AutodiffError> {
        self.sub(target)?.square()?.mean()
    }
}
