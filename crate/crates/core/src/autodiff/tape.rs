//! Recorded forward computation and its reverse-mode adjoint pass.
//!
//! Every primitive validates shapes, computes its value eagerly and appends a record.
//! `backward` walks the records in exact reverse order, so the tape is its own
//! topological order.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::params::ParameterStore;
use super::tensor::{gemm, MatRef, Real, Tensor};
use crate::error::{KgcError, Result};

/// Clamp applied to sigmoid outputs inside the BCE primitive.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Constant,
    Param,
    MatMul { a: NodeId, b: NodeId, trans_b: bool },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    Concat { inputs: Vec<NodeId>, axis: usize },
    Reshape(NodeId),
    Conv2d { input: NodeId, filters: NodeId },
    Sigmoid(NodeId),
    Tanh(NodeId),
    LeakyRelu(NodeId, T),
    Relu(NodeId),
    SegmentSoftmax { input: NodeId, offsets: Arc<[usize]> },
    Sum(NodeId),
    Gather { table: NodeId, index: Arc<[usize]> },
    ScatterAdd { src: NodeId, index: Arc<[usize]>, weights: Option<Arc<[T]>> },
    CircularCorrelation(NodeId, NodeId),
    Bce { logits: NodeId, targets: Arc<[T]> },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param => "param",
            Op::MatMul { .. } => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Concat { .. } => "concat",
            Op::Reshape(_) => "reshape",
            Op::Conv2d { .. } => "conv2d",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Relu(_) => "relu",
            Op::SegmentSoftmax { .. } => "softmax",
            Op::Sum(_) => "sum",
            Op::Gather { .. } => "gather",
            Op::ScatterAdd { .. } => "scatter_add",
            Op::CircularCorrelation(..) => "ccorr",
            Op::Bce { .. } => "bce",
        }
    }
}

/// Names of every primitive, as accepted by [`Tape::inject_sign_flip`].
pub const PRIMITIVES: &[&str] = &[
    "matmul", "add", "sub", "mul", "scale", "concat", "reshape", "conv2d", "sigmoid", "tanh",
    "leaky_relu", "relu", "softmax", "sum", "gather", "scatter_add", "ccorr", "bce",
];

#[derive(Debug)]
struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
}

/// Single-writer record of primitive applications.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<String, NodeId>,
    flip: Option<String>,
}

/// Result of a backward pass.
#[derive(Debug)]
pub struct Gradients<T> {
    nodes: Vec<Option<Tensor<T>>>,
    params: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for a named parameter; zero-filled when the loss does not reach it.
    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name)
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor<T>> {
        &self.params
    }

    pub fn into_params(self) -> BTreeMap<String, Tensor<T>> {
        self.params
    }

    /// Gradient with respect to any recorded node (constants included).
    pub fn wrt(&self, node: NodeId) -> Option<&Tensor<T>> {
        self.nodes.get(node.0).and_then(Option::as_ref)
    }
}

fn same_shape<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(KgcError::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Rows and trailing row length of a rank>=1 tensor.
fn row_layout(shape: &[usize]) -> (usize, usize) {
    (shape[0], shape[1..].iter().product())
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: HashMap::new(),
            flip: None,
        }
    }

    /// Test hook: negates the adjoint of every application of `primitive`.
    pub fn inject_sign_flip(&mut self, primitive: &str) {
        self.flip = Some(primitive.to_owned());
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn value_shared(&self, id: NodeId) -> Arc<Tensor<T>> {
        self.nodes[id.0].value.clone()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(KgcError::Numeric(format!(
                "{} produced a non-finite value",
                op.name()
            )));
        }
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Result<NodeId> {
        self.push(value, Op::Constant)
    }

    /// Constant leaf sharing storage with the caller.
    pub fn constant_shared(&mut self, value: Arc<Tensor<T>>) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(KgcError::Numeric("constant produced a non-finite value".into()));
        }
        self.nodes.push(Node {
            value,
            op: Op::Constant,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Registers a trainable tensor; repeated calls return the same node.
    pub fn param(&mut self, store: &ParameterStore<T>, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.params.get(name) {
            return Ok(id);
        }
        let value = store
            .get_shared(name)
            .ok_or_else(|| KgcError::Contract(format!("unknown parameter {name:?}")))?;
        self.nodes.push(Node {
            value,
            op: Op::Param,
        });
        let id = NodeId(self.nodes.len() - 1);
        self.params.insert(name.to_owned(), id);
        Ok(id)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.matmul_impl(a, b, false)
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: NodeId, b: NodeId, trans_b: bool) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = av
            .dims2()
            .ok_or_else(|| KgcError::shape("matmul", format!("left is {:?}", av.shape())))?;
        let (br, bc) = bv
            .dims2()
            .ok_or_else(|| KgcError::shape("matmul", format!("right is {:?}", bv.shape())))?;
        let (k2, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(KgcError::shape(
                "matmul",
                format!("{:?} x {:?}{}", av.shape(), bv.shape(), if trans_b { "^T" } else { "" }),
            ));
        }
        let mut out = vec![T::zero(); m * n];
        gemm(
            MatRef::new(av.data(), m, k, false),
            MatRef::new(bv.data(), k, n, trans_b),
            &mut out,
            false,
        );
        let value = Tensor::from_vec(&[m, n], out)?;
        self.push(value, Op::MatMul { a, b, trans_b })
    }

    fn zip(&mut self, op: &'static str, a: NodeId, b: NodeId, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape(op, av, bv)?;
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(av.shape(), data)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.zip("add", a, b, |x, y| x + y)?;
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.zip("sub", a, b, |x, y| x - y)?;
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.zip("mul", a, b, |x, y| x * y)?;
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, s: T) -> Result<NodeId> {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId> {
        let first = inputs
            .first()
            .ok_or_else(|| KgcError::shape("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(KgcError::shape("concat", format!("axis {axis} for rank {}", base.len())));
        }
        let mut axis_total = 0;
        for &id in inputs {
            let s = self.shape(id);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(KgcError::shape("concat", format!("{s:?} vs {base:?} on axis {axis}")));
            }
            axis_total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * axis_total * inner);
        for o in 0..outer {
            for &id in inputs {
                let v = self.value(id);
                let block = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * block..(o + 1) * block]);
            }
        }
        let mut shape = base;
        shape[axis] = axis_total;
        let v = Tensor::from_vec(&shape, data)?;
        self.push(v, Op::Concat { inputs: inputs.to_vec(), axis })
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(a).clone().reshaped(shape)?;
        self.push(v, Op::Reshape(a))
    }

    /// Valid, stride-1 convolution (cross-correlation, as in CNN layers).
    /// `input: [B, H, W]`, `filters: [F, kh, kw]` -> `[B, F, H-kh+1, W-kw+1]`.
    pub fn conv2d(&mut self, input: NodeId, filters: NodeId) -> Result<NodeId> {
        let (iv, fv) = (self.value(input), self.value(filters));
        let (b, h, w) = match iv.shape() {
            &[b, h, w] => (b, h, w),
            s => return Err(KgcError::shape("conv2d", format!("input {s:?}, expected [B,H,W]"))),
        };
        let (f, kh, kw) = match fv.shape() {
            &[f, kh, kw] => (f, kh, kw),
            s => return Err(KgcError::shape("conv2d", format!("filters {s:?}, expected [F,kh,kw]"))),
        };
        if kh > h || kw > w {
            return Err(KgcError::shape("conv2d", format!("kernel {kh}x{kw} exceeds {h}x{w}")));
        }
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let patches = im2col(iv.data(), b, h, w, kh, kw);
        let rows = b * oh * ow;
        let mut cols_out = vec![T::zero(); rows * f];
        gemm(
            MatRef::new(&patches, rows, kh * kw, false),
            MatRef::new(fv.data(), kh * kw, f, true),
            &mut cols_out,
            false,
        );
        let mut data = vec![T::zero(); rows * f];
        for bi in 0..b {
            for p in 0..oh * ow {
                let src = &cols_out[(bi * oh * ow + p) * f..][..f];
                for (fi, &v) in src.iter().enumerate() {
                    data[(bi * f + fi) * oh * ow + p] = v;
                }
            }
        }
        let v = Tensor::from_vec(&[b, f, oh, ow], data)?;
        self.push(v, Op::Conv2d { input, filters })
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(T::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: T) -> Result<NodeId> {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { x * slope });
        self.push(v, Op::LeakyRelu(a, slope))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        self.push(v, Op::Relu(a))
    }

    /// Softmax over all elements.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.value(a).len();
        self.segment_softmax(a, Arc::from(vec![0, n]))
    }

    /// Independent softmax over each `[offsets[i], offsets[i+1])` slice of the flattened input.
    pub fn segment_softmax(&mut self, a: NodeId, offsets: Arc<[usize]>) -> Result<NodeId> {
        let x = self.value(a);
        let valid = offsets.first() == Some(&0)
            && offsets.last() == Some(&x.len())
            && offsets.windows(2).all(|w| w[0] < w[1]);
        if !valid {
            return Err(KgcError::shape(
                "softmax",
                format!("segments must tile {} elements with non-empty ranges", x.len()),
            ));
        }
        let mut out = x.data().to_vec();
        for w in offsets.windows(2) {
            let seg = &mut out[w[0]..w[1]];
            let max = seg.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in seg.iter_mut() {
                *v = (*v - max).exp();
                total = total + *v;
            }
            for v in seg.iter_mut() {
                *v = *v / total;
            }
        }
        let v = Tensor::from_vec(x.shape(), out)?;
        self.push(v, Op::SegmentSoftmax { input: a, offsets })
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let total: f64 = self
            .value(a)
            .data()
            .iter()
            .map(|v| v.to_f64().unwrap_or(f64::NAN))
            .sum();
        self.push(Tensor::scalar(T::lit(total)), Op::Sum(a))
    }

    /// Rows of `table` selected by `index`. Adjoint is a scatter-add.
    pub fn gather(&mut self, table: NodeId, index: impl Into<Arc<[usize]>>) -> Result<NodeId> {
        let index = index.into();
        let tv = self.value(table);
        if tv.shape().is_empty() {
            return Err(KgcError::shape("gather", "rank-0 table"));
        }
        let (rows, width) = row_layout(tv.shape());
        let mut data = Vec::with_capacity(index.len() * width);
        for &i in index.iter() {
            if i >= rows {
                return Err(KgcError::shape("gather", format!("row {i} of {rows}")));
            }
            data.extend_from_slice(&tv.data()[i * width..(i + 1) * width]);
        }
        let mut shape = tv.shape().to_vec();
        shape[0] = index.len();
        let v = Tensor::from_vec(&shape, data)?;
        self.push(v, Op::Gather { table, index })
    }

    /// Sums row `i` of `src` into output row `index[i]`. Adjoint is a gather.
    pub fn scatter_add(&mut self, src: NodeId, index: impl Into<Arc<[usize]>>, rows: usize) -> Result<NodeId> {
        self.scatter_impl(src, index.into(), None, rows)
    }

    /// As [`Tape::scatter_add`], with row `i` scaled by the constant `weights[i]` first.
    pub fn scatter_add_scaled(
        &mut self,
        src: NodeId,
        index: impl Into<Arc<[usize]>>,
        weights: impl Into<Arc<[T]>>,
        rows: usize,
    ) -> Result<NodeId> {
        let index = index.into();
        let weights = weights.into();
        if weights.len() != index.len() {
            return Err(KgcError::shape(
                "scatter_add",
                format!("{} weights for {} indices", weights.len(), index.len()),
            ));
        }
        self.scatter_impl(src, index, Some(weights), rows)
    }

    fn scatter_impl(
        &mut self,
        src: NodeId,
        index: Arc<[usize]>,
        weights: Option<Arc<[T]>>,
        rows: usize,
    ) -> Result<NodeId> {
        let sv = self.value(src);
        if sv.shape().is_empty() || sv.shape()[0] != index.len() {
            return Err(KgcError::shape(
                "scatter_add",
                format!("{} indices for source {:?}", index.len(), sv.shape()),
            ));
        }
        let (_, width) = row_layout(sv.shape());
        let mut out = vec![T::zero(); rows * width];
        for (i, &dst) in index.iter().enumerate() {
            if dst >= rows {
                return Err(KgcError::shape("scatter_add", format!("row {dst} of {rows}")));
            }
            let w = weights.as_ref().map_or(T::one(), |w| w[i]);
            let src_row = &sv.data()[i * width..(i + 1) * width];
            for (o, &s) in out[dst * width..(dst + 1) * width].iter_mut().zip(src_row) {
                *o = *o + w * s;
            }
        }
        let mut shape = sv.shape().to_vec();
        shape[0] = rows;
        let v = Tensor::from_vec(&shape, out)?;
        self.push(v, Op::ScatterAdd { src, index, weights })
    }

    /// Row-wise circular cross-correlation over the last axis:
    /// `c[k] = sum_i a[i] * b[(i + k) mod d]`.
    pub fn ccorr(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("ccorr", av, bv)?;
        let d = *av
            .shape()
            .last()
            .ok_or_else(|| KgcError::shape("ccorr", "rank-0 operand"))?;
        let mut out = vec![T::zero(); av.len()];
        for ((o, ar), br) in out
            .chunks_mut(d)
            .zip(av.data().chunks(d))
            .zip(bv.data().chunks(d))
        {
            ccorr_row(ar, br, o);
        }
        let v = Tensor::from_vec(av.shape(), out)?;
        self.push(v, Op::CircularCorrelation(a, b))
    }

    /// Summed binary cross-entropy of `sigmoid(logits)` against 0/1 targets, with the
    /// probabilities clamped to `[BCE_EPS, 1 - BCE_EPS]`.
    ///
    /// The adjoint is `sigmoid(z) - y`, the derivative of the unclamped loss, so saturated
    /// wrong predictions keep a learning signal. Inside the clamp range the two agree.
    pub fn bce(&mut self, logits: NodeId, targets: impl Into<Arc<[T]>>) -> Result<NodeId> {
        let targets = targets.into();
        let z = self.value(logits);
        if z.len() != targets.len() {
            return Err(KgcError::shape(
                "bce",
                format!("{} logits vs {} targets", z.len(), targets.len()),
            ));
        }
        let (lo, hi) = (BCE_EPS, 1.0 - BCE_EPS);
        let mut total = 0.0f64;
        for (&zi, &yi) in z.data().iter().zip(targets.iter()) {
            let z = zi.to_f64().unwrap_or(f64::NAN);
            let y = yi.to_f64().unwrap_or(f64::NAN);
            let p = sigmoid(z).clamp(lo, hi);
            let q = sigmoid(-z).clamp(lo, hi);
            total -= y * p.ln() + (1.0 - y) * q.ln();
        }
        self.push(Tensor::scalar(T::lit(total)), Op::Bce { logits, targets })
    }

    /// Reverse pass from a scalar node. Every parameter in `store` gets an entry.
    pub fn backward(&self, loss: NodeId, store: &ParameterStore<T>) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(KgcError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(mut g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if self.flip.as_deref() == Some(node.op.name()) {
                g = g.map(|v| -v);
            }
            self.propagate(&node.op, &node.value, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        let mut params = BTreeMap::new();
        for (name, tensor) in store.iter() {
            let g = self
                .params
                .get(name)
                .and_then(|id| grads[id.0].clone())
                .unwrap_or_else(|| Tensor::zeros(tensor.shape()));
            params.insert(name.to_owned(), g);
        }
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }

    fn propagate(
        &self,
        op: &Op<T>,
        out: &Tensor<T>,
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        let mut acc = |id: NodeId, delta: Tensor<T>| {
            match &mut grads[id.0] {
                Some(existing) => {
                    for (e, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                        *e = *e + *d;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
        };
        match op {
            Op::Constant | Op::Param => {}
            Op::MatMul { a, b, trans_b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = av.dims2().expect("checked in forward");
                let n = g.shape()[1];
                let mut da = vec![T::zero(); m * k];
                // C = A op(B): dA = dC op(B)^T
                gemm(
                    MatRef::new(g.data(), m, n, false),
                    MatRef::new(bv.data(), n, k, !*trans_b),
                    &mut da,
                    false,
                );
                acc(*a, Tensor::from_vec(&[m, k], da)?);
                let mut db = vec![T::zero(); k * n];
                if *trans_b {
                    // dB [n,k] = dC^T A
                    gemm(
                        MatRef::new(g.data(), n, m, true),
                        MatRef::new(av.data(), m, k, false),
                        &mut db,
                        false,
                    );
                    acc(*b, Tensor::from_vec(&[n, k], db)?);
                } else {
                    gemm(
                        MatRef::new(av.data(), k, m, true),
                        MatRef::new(g.data(), m, n, false),
                        &mut db,
                        false,
                    );
                    acc(*b, Tensor::from_vec(&[k, n], db)?);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, zip_with(g, bv, |x, y| x * y));
                acc(*b, zip_with(g, av, |x, y| x * y));
            }
            Op::Scale(a, s) => acc(*a, g.map(|v| v * *s)),
            Op::Concat { inputs, axis } => {
                let shape = out.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let total_block = shape[*axis] * inner;
                let mut offset = 0;
                for &id in inputs {
                    let s = self.shape(id);
                    let block = s[*axis] * inner;
                    let mut part = Vec::with_capacity(outer * block);
                    for o in 0..outer {
                        let start = o * total_block + offset;
                        part.extend_from_slice(&g.data()[start..start + block]);
                    }
                    acc(id, Tensor::from_vec(s, part)?);
                    offset += block;
                }
            }
            Op::Reshape(a) => {
                let s = self.shape(*a).to_vec();
                acc(*a, g.clone().reshaped(&s)?);
            }
            Op::Conv2d { input, filters } => {
                let (iv, fv) = (self.value(*input), self.value(*filters));
                let (b, h, w) = (iv.shape()[0], iv.shape()[1], iv.shape()[2]);
                let (f, kh, kw) = (fv.shape()[0], fv.shape()[1], fv.shape()[2]);
                let (oh, ow) = (h - kh + 1, w - kw + 1);
                let rows = b * oh * ow;
                let kk = kh * kw;
                // Output gradient laid out as [B*oh*ow, F].
                let mut gcols = vec![T::zero(); rows * f];
                for bi in 0..b {
                    for fi in 0..f {
                        let src = &g.data()[(bi * f + fi) * oh * ow..][..oh * ow];
                        for (p, &v) in src.iter().enumerate() {
                            gcols[(bi * oh * ow + p) * f + fi] = v;
                        }
                    }
                }
                let patches = im2col(iv.data(), b, h, w, kh, kw);
                let mut dw = vec![T::zero(); f * kk];
                gemm(
                    MatRef::new(&gcols, f, rows, true),
                    MatRef::new(&patches, rows, kk, false),
                    &mut dw,
                    false,
                );
                acc(*filters, Tensor::from_vec(fv.shape(), dw)?);
                let mut dpatch = vec![T::zero(); rows * kk];
                gemm(
                    MatRef::new(&gcols, rows, f, false),
                    MatRef::new(fv.data(), f, kk, false),
                    &mut dpatch,
                    false,
                );
                let din = col2im(&dpatch, b, h, w, kh, kw);
                acc(*input, Tensor::from_vec(iv.shape(), din)?);
            }
            Op::Sigmoid(a) => acc(*a, zip_with(g, out, |gv, y| gv * y * (T::one() - y))),
            Op::Tanh(a) => acc(*a, zip_with(g, out, |gv, y| gv * (T::one() - y * y))),
            Op::LeakyRelu(a, slope) => {
                let s = *slope;
                acc(
                    *a,
                    zip_with(g, self.value(*a), |gv, x| if x > T::zero() { gv } else { gv * s }),
                )
            }
            Op::Relu(a) => acc(
                *a,
                zip_with(g, self.value(*a), |gv, x| if x > T::zero() { gv } else { T::zero() }),
            ),
            Op::SegmentSoftmax { input, offsets } => {
                let mut dx = vec![T::zero(); out.len()];
                for w in offsets.windows(2) {
                    let (y, gs) = (&out.data()[w[0]..w[1]], &g.data()[w[0]..w[1]]);
                    let dot = y.iter().zip(gs).fold(T::zero(), |s, (&yv, &gv)| s + yv * gv);
                    for ((d, &yv), &gv) in dx[w[0]..w[1]].iter_mut().zip(y).zip(gs) {
                        *d = yv * (gv - dot);
                    }
                }
                acc(*input, Tensor::from_vec(out.shape(), dx)?);
            }
            Op::Sum(a) => acc(*a, Tensor::full(self.shape(*a), g.data()[0])),
            Op::Gather { table, index } => {
                let ts = self.shape(*table).to_vec();
                let (rows, width) = row_layout(&ts);
                let mut dt = vec![T::zero(); rows * width];
                for (i, &r) in index.iter().enumerate() {
                    let src = &g.data()[i * width..(i + 1) * width];
                    for (d, &s) in dt[r * width..(r + 1) * width].iter_mut().zip(src) {
                        *d = *d + s;
                    }
                }
                acc(*table, Tensor::from_vec(&ts, dt)?);
            }
            Op::ScatterAdd { src, index, weights } => {
                let ss = self.shape(*src).to_vec();
                let (_, width) = row_layout(&ss);
                let mut ds = Vec::with_capacity(index.len() * width);
                for (i, &r) in index.iter().enumerate() {
                    let row = &g.data()[r * width..(r + 1) * width];
                    match weights {
                        Some(w) => ds.extend(row.iter().map(|&v| v * w[i])),
                        None => ds.extend_from_slice(row),
                    }
                }
                acc(*src, Tensor::from_vec(&ss, ds)?);
            }
            Op::CircularCorrelation(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let d = *av.shape().last().expect("checked in forward");
                let mut da = vec![T::zero(); av.len()];
                let mut db = vec![T::zero(); bv.len()];
                for (((gr, ar), br), (dar, dbr)) in g
                    .data()
                    .chunks(d)
                    .zip(av.data().chunks(d))
                    .zip(bv.data().chunks(d))
                    .zip(da.chunks_mut(d).zip(db.chunks_mut(d)))
                {
                    for (k, &gk) in gr.iter().enumerate() {
                        for i in 0..d {
                            let j = (i + k) % d;
                            dar[i] = dar[i] + gk * br[j];
                            dbr[j] = dbr[j] + gk * ar[i];
                        }
                    }
                }
                acc(*a, Tensor::from_vec(av.shape(), da)?);
                acc(*b, Tensor::from_vec(bv.shape(), db)?);
            }
            Op::Bce { logits, targets } => {
                let zv = self.value(*logits);
                let scale = g.data()[0];
                let dz = zv
                    .data()
                    .iter()
                    .zip(targets.iter())
                    .map(|(&z, &y)| scale * (sigmoid(z) - y))
                    .collect();
                acc(*logits, Tensor::from_vec(zv.shape(), dz)?);
            }
        }
        Ok(())
    }
}

fn zip_with<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.shape(), data).expect("same shape")
}

pub(crate) fn ccorr_row<T: Real>(a: &[T], b: &[T], out: &mut [T]) {
    let d = a.len();
    for (k, o) in out.iter_mut().enumerate() {
        let mut s = T::zero();
        for i in 0..d {
            s = s + a[i] * b[(i + k) % d];
        }
        *o = s;
    }
}

/// `[B, H, W]` -> patches `[B*oh*ow, kh*kw]`.
fn im2col<T: Real>(x: &[T], b: usize, h: usize, w: usize, kh: usize, kw: usize) -> Vec<T> {
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = Vec::with_capacity(b * oh * ow * kh * kw);
    for bi in 0..b {
        let img = &x[bi * h * w..(bi + 1) * h * w];
        for i in 0..oh {
            for j in 0..ow {
                for p in 0..kh {
                    out.extend_from_slice(&img[(i + p) * w + j..(i + p) * w + j + kw]);
                }
            }
        }
    }
    out
}

fn col2im<T: Real>(cols: &[T], b: usize, h: usize, w: usize, kh: usize, kw: usize) -> Vec<T> {
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = vec![T::zero(); b * h * w];
    let mut it = cols.iter();
    for bi in 0..b {
        let img = &mut out[bi * h * w..(bi + 1) * h * w];
        for i in 0..oh {
            for j in 0..ow {
                for p in 0..kh {
                    for q in 0..kw {
                        let v = *it.next().expect("patch count");
                        img[(i + p) * w + j + q] = img[(i + p) * w + j + q] + v;
                    }
                }
            }
        }
    }
    out
}
