//! Dense double-precision tensors with a tape-based reverse-mode autodiff graph.
//!
//! Storage is flat and row-major with no strides or views; every op copies.
//! Only the operations the question generator needs are provided.

use thiserror::Error;

/// Floor added inside the logarithm of [`Graph::nll_loss`].
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("index {index} out of range in {op} (bound {bound})")]
    Index {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(TensorError::Dimension {
                op: "tensor",
                lhs: shape,
                rhs: vec![values.len()],
            });
        }
        Ok(Tensor {
            shape,
            values,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Tensor {
            shape: vec![values.len()],
            values,
            grad: None,
            requires_grad: false,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::vector(vec![value])
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            values: vec![0.0; n],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn with_requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.values.len(), 1);
        self.values[0]
    }

    fn check_finite(&self, op: &'static str) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(TensorError::NonFinite { op })
        }
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Mul,
    Tanh,
    Sigmoid,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul {
        a: NodeId,
        b: NodeId,
        m: usize,
        k: usize,
        n: usize,
    },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Concat {
        inputs: Vec<NodeId>,
        chunk: Vec<usize>,
        outer: usize,
    },
    Slice {
        input: NodeId,
        start: usize,
    },
    Reshape(NodeId),
    Softmax(NodeId),
    Embedding {
        table: NodeId,
        ids: Vec<usize>,
        width: usize,
    },
    Nll {
        dist: NodeId,
        target: usize,
    },
    Sum(NodeId),
    ScatterAdd {
        input: NodeId,
        index: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Tape of operations in creation order. Backward walks it in exact reverse.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Adds a leaf; it is differentiated iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor) -> NodeId {
        let needs = tensor.requires_grad;
        self.push(Op::Leaf, tensor, needs)
    }

    pub fn constant(&mut self, tensor: Tensor) -> NodeId {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn param(&mut self, tensor: Tensor) -> NodeId {
        self.leaf(tensor.with_requires_grad(true))
    }

    pub fn tensor(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value.values
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].value.shape
    }

    /// Gradient of the last `backward` root with respect to `id`, if it was reached.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Matrix product. A 1-D left operand is a row vector and a 1-D right
    /// operand a column vector; the corresponding output axis is dropped.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let (m, k1, a_vec) = match sa.as_slice() {
            [k] => (1, *k, true),
            [m, k] => (*m, *k, false),
            _ => return Err(dim("matmul", sa, sb)),
        };
        let (k2, n, b_vec) = match sb.as_slice() {
            [k] => (*k, 1, true),
            [k, n] => (*k, *n, false),
            _ => return Err(dim("matmul", sa, sb)),
        };
        if k1 != k2 {
            return Err(dim("matmul", sa, sb));
        }
        let k = k1;
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, &y) in row.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        let shape = match (a_vec, b_vec) {
            (true, true) => vec![1],
            (true, false) => vec![n],
            (false, true) => vec![m],
            (false, false) => vec![m, n],
        };
        let t = Tensor::new(shape, out)?;
        t.check_finite("matmul")?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMul { a, b, m, k, n }, t, needs))
    }

    pub fn elementwise(&mut self, op: Elementwise, inputs: &[NodeId]) -> Result<NodeId> {
        match (op, inputs) {
            (Elementwise::Add, [a, b]) => self.add(*a, *b),
            (Elementwise::Mul, [a, b]) => self.mul(*a, *b),
            (Elementwise::Tanh, [a]) => self.tanh(*a),
            (Elementwise::Sigmoid, [a]) => self.sigmoid(*a),
            _ => Err(TensorError::Contract(format!(
                "{op:?} called with {} inputs",
                inputs.len()
            ))),
        }
    }

    fn broadcast_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<Vec<usize>> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa == sb {
            Ok(sa.to_vec())
        } else if self.tensor(a).numel() == 1 {
            Ok(sb.to_vec())
        } else if self.tensor(b).numel() == 1 {
            Ok(sa.to_vec())
        } else {
            Err(dim(op, sa.to_vec(), sb.to_vec()))
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<(Tensor, bool)> {
        let shape = self.broadcast_shape(name, a, b)?;
        let av = self.value(a);
        let bv = self.value(b);
        let n: usize = shape.iter().product();
        let pick = |v: &[f64], i: usize| if v.len() == 1 { v[0] } else { v[i] };
        let out = (0..n).map(|i| f(pick(av, i), pick(bv, i))).collect();
        let t = Tensor::new(shape, out)?;
        t.check_finite(name)?;
        Ok((t, self.needs(a) || self.needs(b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (t, needs) = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), t, needs))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (t, needs) = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), t, needs))
    }

    fn unary(&mut self, name: &'static str, a: NodeId, f: impl Fn(f64) -> f64) -> Result<(Tensor, bool)> {
        let src = self.tensor(a);
        let t = Tensor::new(src.shape.clone(), src.values.iter().map(|&x| f(x)).collect())?;
        t.check_finite(name)?;
        Ok((t, self.needs(a)))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let (t, needs) = self.unary("tanh", a, f64::tanh)?;
        Ok(self.push(Op::Tanh(a), t, needs))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let (t, needs) = self.unary("sigmoid", a, sigmoid)?;
        Ok(self.push(Op::Sigmoid(a), t, needs))
    }

    /// `1 - x`, built from a scalar-broadcast multiply and add.
    pub fn one_minus(&mut self, a: NodeId) -> Result<NodeId> {
        let neg = self.constant(Tensor::scalar(-1.0));
        let one = self.constant(Tensor::scalar(1.0));
        let na = self.mul(neg, a)?;
        self.add(one, na)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        let c = self.constant(Tensor::scalar(factor));
        self.mul(c, a)
    }

    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId> {
        let first = match inputs.first() {
            Some(f) => self.shape(*f).to_vec(),
            None => return Err(TensorError::Contract("concat of zero tensors".into())),
        };
        if axis >= first.len() {
            return Err(TensorError::Contract(format!(
                "concat axis {axis} out of range for rank {}",
                first.len()
            )));
        }
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        for &id in inputs {
            let s = self.shape(id);
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(dim("concat", first, s.to_vec()));
            }
            out_shape[axis] += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let chunk: Vec<usize> = inputs.iter().map(|&id| self.shape(id)[axis] * inner).collect();
        let total: usize = out_shape.iter().product();
        let mut out = Vec::with_capacity(total);
        for o in 0..outer {
            for (&id, &c) in inputs.iter().zip(&chunk) {
                out.extend_from_slice(&self.value(id)[o * c..(o + 1) * c]);
            }
        }
        let t = Tensor::new(out_shape, out)?;
        let needs = inputs.iter().any(|&id| self.needs(id));
        Ok(self.push(
            Op::Concat {
                inputs: inputs.to_vec(),
                chunk,
                outer,
            },
            t,
            needs,
        ))
    }

    /// Contiguous slice of the flat storage, returned as a 1-D tensor.
    pub fn slice(&mut self, input: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let n = self.tensor(input).numel();
        if start + len > n {
            return Err(TensorError::Index {
                op: "slice",
                index: start + len,
                bound: n,
            });
        }
        let t = Tensor::vector(self.value(input)[start..start + len].to_vec());
        let needs = self.needs(input);
        Ok(self.push(Op::Slice { input, start }, t, needs))
    }

    pub fn reshape(&mut self, input: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let src = self.tensor(input);
        let n: usize = shape.iter().product();
        if n != src.numel() {
            return Err(dim("reshape", src.shape.clone(), shape));
        }
        let t = Tensor::new(shape, src.values.clone())?;
        let needs = self.needs(input);
        Ok(self.push(Op::Reshape(input), t, needs))
    }

    /// Numerically stable softmax over a 1-D tensor.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let src = self.tensor(x);
        if src.shape.len() != 1 || src.numel() == 0 {
            return Err(TensorError::Contract(format!(
                "softmax expects a non-empty vector, got {:?}",
                src.shape
            )));
        }
        let t = Tensor::vector(softmax_values(&src.values));
        t.check_finite("softmax")?;
        let needs = self.needs(x);
        Ok(self.push(Op::Softmax(x), t, needs))
    }

    /// Row gather from a `[V, e]` table; the result is `[ids.len(), e]`.
    pub fn embedding_lookup(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let shape = self.shape(table).to_vec();
        let (rows, width) = match shape.as_slice() {
            [r, w] => (*r, *w),
            _ => {
                return Err(TensorError::Contract(format!(
                    "embedding table must be 2-D, got {shape:?}"
                )))
            }
        };
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * width);
        for &id in ids {
            if id >= rows {
                return Err(TensorError::Index {
                    op: "embedding_lookup",
                    index: id,
                    bound: rows,
                });
            }
            out.extend_from_slice(&tv[id * width..(id + 1) * width]);
        }
        let t = Tensor::new(vec![ids.len(), width], out)?;
        let needs = self.needs(table);
        Ok(self.push(
            Op::Embedding {
                table,
                ids: ids.to_vec(),
                width,
            },
            t,
            needs,
        ))
    }

    /// `-ln(dist[target] + LOG_FLOOR)` for a probability vector.
    pub fn nll_loss(&mut self, dist: NodeId, target: usize) -> Result<NodeId> {
        let d = self.value(dist);
        if target >= d.len() {
            return Err(TensorError::Index {
                op: "nll_loss",
                index: target,
                bound: d.len(),
            });
        }
        let total: f64 = d.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(TensorError::Contract(format!(
                "nll_loss input sums to {total}, not 1"
            )));
        }
        let t = Tensor::scalar(-(d[target] + LOG_FLOOR).ln());
        t.check_finite("nll_loss")?;
        let needs = self.needs(dist);
        Ok(self.push(Op::Nll { dist, target }, t, needs))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let t = Tensor::scalar(self.value(x).iter().sum());
        t.check_finite("sum")?;
        let needs = self.needs(x);
        Ok(self.push(Op::Sum(x), t, needs))
    }

    /// `out[index[i]] += input[i]` into a zero vector of length `size`.
    pub fn scatter_add(&mut self, input: NodeId, index: &[usize], size: usize) -> Result<NodeId> {
        let src = self.value(input);
        if src.len() != index.len() {
            return Err(dim("scatter_add", vec![src.len()], vec![index.len()]));
        }
        let mut out = vec![0.0; size];
        for (&v, &i) in src.iter().zip(index) {
            if i >= size {
                return Err(TensorError::Index {
                    op: "scatter_add",
                    index: i,
                    bound: size,
                });
            }
            out[i] += v;
        }
        let needs = self.needs(input);
        Ok(self.push(
            Op::ScatterAdd {
                input,
                index: index.to_vec(),
            },
            Tensor::vector(out),
            needs,
        ))
    }

    /// Reverse pass from a single-element root. Gradients of every reached
    /// node are summed over all of its consumers; leaves that require grad
    /// also get their `Tensor::grad` filled.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if self.tensor(root).numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].needs_grad {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (node, g) in self.nodes.iter_mut().zip(&grads) {
            if matches!(node.op, Op::Leaf) && node.value.requires_grad {
                node.value.grad = Some(g.clone().unwrap_or_else(|| vec![0.0; node.value.numel()]));
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let needs = |id: NodeId| self.nodes[id.0].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                let av = self.value(*a);
                let bv = self.value(*b);
                if needs(*a) {
                    let ga = slot(grads, *a, m * k);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            ga[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if needs(*b) {
                    let gb = slot(grads, *b, k * n);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for (o, &y) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += x * y;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for &src in [a, b] {
                    if needs(src) {
                        let n = self.tensor(src).numel();
                        let gs = slot(grads, src, n);
                        accumulate_broadcast(gs, g, |_| 1.0);
                    }
                }
            }
            Op::Mul(a, b) => {
                for (&src, &other) in [(a, b), (b, a)] {
                    if needs(src) {
                        let n = self.tensor(src).numel();
                        let ov = self.value(other);
                        let gs = slot(grads, src, n);
                        accumulate_broadcast(gs, g, |i| if ov.len() == 1 { ov[0] } else { ov[i] });
                    }
                }
            }
            Op::Tanh(a) => {
                let y = &node.value.values;
                let ga = slot(grads, *a, y.len());
                for ((o, &gy), &yy) in ga.iter_mut().zip(g).zip(y) {
                    *o += gy * (1.0 - yy * yy);
                }
            }
            Op::Sigmoid(a) => {
                let y = &node.value.values;
                let ga = slot(grads, *a, y.len());
                for ((o, &gy), &yy) in ga.iter_mut().zip(g).zip(y) {
                    *o += gy * yy * (1.0 - yy);
                }
            }
            Op::Concat {
                inputs,
                chunk,
                outer,
            } => {
                let width: usize = chunk.iter().sum();
                let mut offset = 0;
                for (&id, &c) in inputs.iter().zip(chunk) {
                    if needs(id) {
                        let gi = slot(grads, id, c * outer);
                        for o in 0..*outer {
                            let src = &g[o * width + offset..o * width + offset + c];
                            for (x, &y) in gi[o * c..(o + 1) * c].iter_mut().zip(src) {
                                *x += y;
                            }
                        }
                    }
                    offset += c;
                }
            }
            Op::Slice { input, start } => {
                let n = self.tensor(*input).numel();
                let gi = slot(grads, *input, n);
                for (x, &y) in gi[*start..*start + g.len()].iter_mut().zip(g) {
                    *x += y;
                }
            }
            Op::Reshape(input) => {
                let gi = slot(grads, *input, g.len());
                for (x, &y) in gi.iter_mut().zip(g) {
                    *x += y;
                }
            }
            Op::Softmax(x) => {
                let y = &node.value.values;
                let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                let gx = slot(grads, *x, y.len());
                for ((o, &gy), &yy) in gx.iter_mut().zip(g).zip(y) {
                    *o += yy * (gy - dot);
                }
            }
            Op::Embedding { table, ids, width } => {
                let n = self.tensor(*table).numel();
                let gt = slot(grads, *table, n);
                for (row, &id) in ids.iter().enumerate() {
                    let src = &g[row * width..(row + 1) * width];
                    for (x, &y) in gt[id * width..(id + 1) * width].iter_mut().zip(src) {
                        *x += y;
                    }
                }
            }
            Op::Nll { dist, target } => {
                let d = self.value(*dist);
                let gd = slot(grads, *dist, d.len());
                gd[*target] -= g[0] / (d[*target] + LOG_FLOOR);
            }
            Op::Sum(x) => {
                let n = self.tensor(*x).numel();
                let gx = slot(grads, *x, n);
                for o in gx.iter_mut() {
                    *o += g[0];
                }
            }
            Op::ScatterAdd { input, index } => {
                let gi = slot(grads, *input, index.len());
                for (o, &i) in gi.iter_mut().zip(index) {
                    *o += g[i];
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], id: NodeId, n: usize) -> &mut Vec<f64> {
    grads[id.0].get_or_insert_with(|| vec![0.0; n])
}

/// Adds `g[i] * local(i)` into `target`, summing over the output when
/// `target` is a broadcast scalar.
fn accumulate_broadcast(target: &mut [f64], g: &[f64], local: impl Fn(usize) -> f64) {
    if target.len() == g.len() {
        for (i, (t, &gi)) in target.iter_mut().zip(g).enumerate() {
            *t += gi * local(i);
        }
    } else {
        target[0] += g.iter().enumerate().map(|(i, &gi)| gi * local(i)).sum::<f64>();
    }
}

fn dim(op: &'static str, lhs: Vec<usize>, rhs: Vec<usize>) -> TensorError {
    TensorError::Dimension { op, lhs, rhs }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_values(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Central-difference gradient check of a scalar-valued graph function.
///
/// Returns the worst per-coordinate relative error, with denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(f: F, input: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, NodeId) -> Result<NodeId>,
{
    if eps <= 0.0 {
        return Err(TensorError::Contract(format!("eps must be positive, got {eps}")));
    }
    let eval = |t: Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let x = g.constant(t);
        let out = f(&mut g, x)?;
        scalar_of(&g, out)
    };
    let mut g = Graph::new();
    let x = g.param(input.clone());
    let out = f(&mut g, x)?;
    scalar_of(&g, out)?;
    g.backward(out)?;
    let analytic = g.tensor(x).grad().map(<[f64]>::to_vec).unwrap_or_default();

    let mut worst: f64 = 0.0;
    for i in 0..input.numel() {
        let mut plus = input.clone();
        plus.values[i] += eps;
        let mut minus = input.clone();
        minus.values[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

fn scalar_of(g: &Graph, id: NodeId) -> Result<f64> {
    let t = g.tensor(id);
    if t.numel() != 1 {
        return Err(TensorError::Contract(format!(
            "grad_check needs a scalar function, got shape {:?}",
            t.shape()
        )));
    }
    Ok(t.item())
}
