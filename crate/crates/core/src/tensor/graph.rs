use std::collections::HashMap;

use rand::Rng;

use super::kernels::{matmul_acc, matmul_at_acc, matmul_bt_acc, sigmoid, transpose};
use super::{ParamId, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::scalar::Scalar;

/// Additive mask standing in for −∞ ahead of a softmax.
const MASK_FILL: f64 = -1e30;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Whether stochastic layers are active.
pub enum Mode<'r> {
    Train(&'r mut StreamRng),
    Eval,
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    OneMinus(Var),
    Scale(Var, T),
    Sum(Var),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Stack(Vec<Var>),
    SliceRows {
        input: Var,
        start: usize,
    },
    Reshape(Var),
    MaskedSoftmax {
        input: Var,
        valid: usize,
    },
    MaxOverTime {
        input: Var,
        argmax: Vec<usize>,
    },
    Dropout {
        input: Var,
        mask: Vec<T>,
    },
    WeightedNllLog2 {
        probs: Var,
        targets: Vec<(usize, usize, T)>,
        norm: T,
    },
}

#[derive(Debug)]
struct Node<T> {
    op: Op<T>,
    shape: Vec<usize>,
    value: Vec<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
}

/// Records operations as they execute and replays them backwards.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward walks it once in reverse. Parameter
/// values are read from the borrowed [`ParamSet`] without copying.
pub struct Graph<'p, T: Scalar> {
    params: Option<&'p ParamSet<T>>,
    nodes: Vec<Node<T>>,
    param_vars: HashMap<ParamId, Var>,
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (1, *n),
        [m, n] => (*m, *n),
        _ => (0, 0),
    }
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new(params: &'p ParamSet<T>) -> Self {
        Graph {
            params: Some(params),
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    /// Graph with no parameter store, for free-standing tensor math.
    pub fn detached() -> Self {
        Graph {
            params: None,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<T>, shape: Vec<usize>, value: Vec<T>, requires_grad: bool) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || shape.iter().product::<usize>() == value.len());
        self.nodes.push(Node {
            op,
            shape,
            value,
            grad: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &[T] {
        match self.nodes[v.0].op {
            Op::Param(id) => self
                .params
                .expect("param node without store")
                .get(id)
                .data(),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Copies a node out as a standalone tensor, gradient included.
    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor::from_parts(
            n.shape.clone(),
            self.value(v).to_vec(),
            n.grad.clone(),
            n.requires_grad,
        )
    }

    /// Inserts a tensor as a leaf; it receives a gradient iff it requires one.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        let rg = t.requires_grad();
        let shape = t.shape().to_vec();
        self.push(Op::Leaf, shape, t.into_data(), rg)
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<T>) -> Result<Var> {
        let t = Tensor::new(shape.to_vec(), data)?;
        Ok(self.input(t))
    }

    /// Leaf node bound to a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let t = self.params.expect("param() on a detached graph").get(id);
        let (shape, rg) = (t.shape().to_vec(), t.requires_grad());
        let v = self.push(Op::Param(id), shape, Vec::new(), rg);
        self.param_vars.insert(id, v);
        v
    }

    /// Rows `ids` of a 2-D table, as an `ids.len()×d` matrix.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let shape = self.shape(table).to_vec();
        let [rows, d] = shape[..] else {
            return Err(Error::dim(
                "gather_rows",
                format!("table must be 2-D, got {shape:?}"),
            ));
        };
        if ids.is_empty() {
            return Err(Error::EmptySequence("gather_rows"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::dim(
                "gather_rows",
                format!("row {bad} out of range for table {shape:?}"),
            ));
        }
        let src = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let rg = self.rg(table);
        Ok(self.push(
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            vec![ids.len(), d],
            out,
            rg,
        ))
    }

    /// `a[m×k] · b[k×n]`; a 1-D `a` of length `k` yields a length-`n` vector.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (m, k, out_shape) = match sa[..] {
            [k] => (1, k, None),
            [m, k] => (m, k, Some(m)),
            _ => {
                return Err(Error::dim(
                    "matmul",
                    format!("lhs {sa:?} must be 1-D or 2-D"),
                ))
            }
        };
        let [kb, n] = sb[..] else {
            return Err(Error::dim(
                "matmul",
                format!("rhs {sb:?} must be 2-D (lhs {sa:?})"),
            ));
        };
        if k != kb {
            return Err(Error::dim(
                "matmul",
                format!("inner extents differ: {sa:?} · {sb:?}"),
            ));
        }
        let mut out = vec![T::zero(); m * n];
        matmul_acc(self.value(a), self.value(b), &mut out, m, k, n);
        let shape = match out_shape {
            Some(m) => vec![m, n],
            None => vec![n],
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMul(a, b), shape, out, rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        let [m, n] = s[..] else {
            return Err(Error::dim("transpose", format!("expected 2-D, got {s:?}")));
        };
        let out = transpose(self.value(a), m, n);
        let rg = self.rg(a);
        Ok(self.push(Op::Transpose(a), vec![n, m], out, rg))
    }

    /// Elementwise sum. `b` may also be a bias row broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let rg = self.rg(a) || self.rg(b);
        if sa == sb {
            let out = self
                .value(a)
                .iter()
                .zip(self.value(b))
                .map(|(&x, &y)| x + y)
                .collect();
            return Ok(self.push(Op::Add(a, b), sa, out, rg));
        }
        let bias_width = match sb[..] {
            [n] | [1, n] => Some(n),
            _ => None,
        };
        match (sa.len(), bias_width) {
            (2, Some(n)) if sa[1] == n => {
                let bv = self.value(b);
                let out = self
                    .value(a)
                    .chunks(n)
                    .flat_map(|row| row.iter().zip(bv).map(|(&x, &y)| x + y))
                    .collect();
                Ok(self.push(Op::AddRow(a, b), sa, out, rg))
            }
            _ => Err(Error::dim(
                "add",
                format!("incompatible shapes {sa:?} and {sb:?}"),
            )),
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Vec<usize>> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::dim(op, format!("shapes differ: {sa:?} vs {sb:?}")));
        }
        Ok(sa.to_vec())
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape("sub", a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x - y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Sub(a, b), shape, out, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape("mul", a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x * y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Mul(a, b), shape, out, rg))
    }

    fn unary(&mut self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        let (shape, rg) = (self.shape(a).to_vec(), self.rg(a));
        self.push(op, shape, out, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), T::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    /// `1 − a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        self.unary(a, Op::OneMinus(a), |x| T::one() - x)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        self.unary(a, Op::Scale(a, c), |x| x * c)
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().copied().sum();
        let rg = self.rg(a);
        self.push(Op::Sum(a), Vec::new(), vec![s], rg)
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts.first().ok_or(Error::EmptySequence("concat"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim(
                "concat",
                format!("axis {axis} out of range for {base:?}"),
            ));
        }
        let mut extent = 0;
        for &p in parts {
            let s = self.shape(p);
            let agree = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !agree {
                return Err(Error::dim(
                    "concat",
                    format!("part {s:?} disagrees with {base:?} off axis {axis}"),
                ));
            }
            extent += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * extent * inner);
        for o in 0..outer {
            for &p in parts {
                let chunk = self.shape(p)[axis] * inner;
                out.extend_from_slice(&self.value(p)[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = extent;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            shape,
            out,
            rg,
        ))
    }

    /// Stacks equally long vectors into the rows of a matrix.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::EmptySequence("stack"))?;
        let d = match self.shape(*first) {
            [d] => *d,
            s => return Err(Error::dim("stack", format!("parts must be 1-D, got {s:?}"))),
        };
        let mut out = Vec::with_capacity(parts.len() * d);
        for &p in parts {
            if self.shape(p) != [d] {
                return Err(Error::dim(
                    "stack",
                    format!("part {:?} differs from [{d}]", self.shape(p)),
                ));
            }
            out.extend_from_slice(self.value(p));
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Op::Stack(parts.to_vec()), vec![parts.len(), d], out, rg))
    }

    /// Row `i` of a matrix, as a vector.
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let r = self.slice_rows(a, i, 1)?;
        let d = self.shape(r)[1];
        self.reshape(r, &[d])
    }

    /// Rows `start..start+len` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        let [m, n] = s[..] else {
            return Err(Error::dim("slice_rows", format!("expected 2-D, got {s:?}")));
        };
        if len == 0 || start + len > m {
            return Err(Error::dim(
                "slice_rows",
                format!("rows {start}..{} out of {s:?}", start + len),
            ));
        }
        let out = self.value(a)[start * n..(start + len) * n].to_vec();
        let rg = self.rg(a);
        Ok(self.push(Op::SliceRows { input: a, start }, vec![len, n], out, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(a).len() || shape.contains(&0) {
            return Err(Error::dim(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape(a)),
            ));
        }
        let out = self.value(a).to_vec();
        let rg = self.rg(a);
        Ok(self.push(Op::Reshape(a), shape.to_vec(), out, rg))
    }

    /// Softmax over the first `valid` entries of each row.
    ///
    /// Entries at or past `valid` get exactly zero weight. For a 2-D input,
    /// rows at or past `valid` are padding queries and come out all zero.
    pub fn masked_softmax(&mut self, a: Var, valid: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        let (m, n) = rows_cols(&s);
        if n == 0 {
            return Err(Error::dim(
                "masked_softmax",
                format!("expected 1-D or 2-D, got {s:?}"),
            ));
        }
        if valid == 0 || valid > n {
            return Err(Error::InvalidMask(format!(
                "valid count {valid} for width {n}"
            )));
        }
        let live_rows = if s.len() == 1 { 1 } else { valid.min(m) };
        let out = softmax_rows(self.value(a), m, n, live_rows, valid);
        let rg = self.rg(a);
        Ok(self.push(Op::MaskedSoftmax { input: a, valid }, s, out, rg))
    }

    /// Row-wise softmax over every column.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        let (m, n) = rows_cols(&s);
        if n == 0 {
            return Err(Error::dim(
                "softmax",
                format!("expected 1-D or 2-D, got {s:?}"),
            ));
        }
        let out = softmax_rows(self.value(a), m, n, m, n);
        let rg = self.rg(a);
        Ok(self.push(Op::MaskedSoftmax { input: a, valid: n }, s, out, rg))
    }

    /// Per-column maximum over the first `valid` rows; ties go to the earliest row.
    pub fn max_over_time(&mut self, a: Var, valid: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        let [m, d] = s[..] else {
            return Err(Error::dim(
                "max_over_time",
                format!("expected 2-D, got {s:?}"),
            ));
        };
        if valid == 0 {
            return Err(Error::EmptySequence("max_over_time"));
        }
        if valid > m {
            return Err(Error::InvalidMask(format!(
                "valid count {valid} exceeds {m} rows"
            )));
        }
        let x = self.value(a);
        let mut argmax = vec![0usize; d];
        let mut out = x[..d].to_vec();
        for t in 1..valid {
            for j in 0..d {
                let v = x[t * d + j];
                if v > out[j] {
                    out[j] = v;
                    argmax[j] = t;
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Op::MaxOverTime { input: a, argmax }, vec![d], out, rg))
    }

    /// Inverted dropout: survivors are scaled by `1/(1−rate)`; identity in eval mode.
    pub fn dropout(&mut self, a: Var, rate: f64, mode: &mut Mode<'_>) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        let rng = match mode {
            Mode::Train(rng) if rate > 0.0 => rng,
            _ => return Ok(a),
        };
        let keep = T::lit(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(a).len())
            .map(|_| {
                if rng.gen::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let out = self
            .value(a)
            .iter()
            .zip(&mask)
            .map(|(&x, &k)| x * k)
            .collect();
        let (shape, rg) = (self.shape(a).to_vec(), self.rg(a));
        Ok(self.push(Op::Dropout { input: a, mask }, shape, out, rg))
    }

    /// Class-weighted negative log-likelihood in bits, normalized by `norm`.
    ///
    /// `probs` is an `N×C` matrix of probability rows; `targets` holds
    /// `(row, class, weight)`. Probabilities are floored at `floor` inside
    /// the logarithm; a floored entry passes no gradient.
    pub fn weighted_nll_log2(
        &mut self,
        probs: Var,
        targets: &[(usize, usize, T)],
        norm: T,
        floor: T,
    ) -> Result<Var> {
        let s = self.shape(probs).to_vec();
        let [rows, classes] = s[..] else {
            return Err(Error::dim(
                "weighted_nll",
                format!("expected N×C, got {s:?}"),
            ));
        };
        if norm <= T::zero() {
            return Err(Error::Contract("loss normalizer must be positive".into()));
        }
        let p = self.value(probs);
        let mut total = T::zero();
        for &(r, c, w) in targets {
            if r >= rows || c >= classes {
                return Err(Error::Contract(format!("target ({r}, {c}) outside {s:?}")));
            }
            if w != T::zero() {
                total += w * p[r * classes + c].max(floor).log2();
            }
        }
        let loss = -total / norm;
        let rg = self.rg(probs);
        let targets = targets
            .iter()
            .map(|&(r, c, w)| (r * classes + c, usize::from(p[r * classes + c] > floor), w))
            .collect();
        Ok(self.push(
            Op::WeightedNllLog2 {
                probs,
                targets,
                norm,
            },
            Vec::new(),
            vec![loss],
            rg,
        ))
    }

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Gradients add into every `requires_grad` node's slot, so calling this
    /// twice doubles them. A loss that depends on nothing trainable is a no-op.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.rg(loss) {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            let node = &mut self.nodes[idx];
            match node.grad.as_mut() {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &x)| *a += x),
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[idx];
        let nodes = &self.nodes;
        macro_rules! slot {
            ($v:expr) => {
                grad_slot(nodes, grads, $v)
            };
        }
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Gather { table, ids } => {
                let d = node.shape[1];
                if let Some(gt) = slot!(*table) {
                    for (r, &i) in ids.iter().enumerate() {
                        for j in 0..d {
                            gt[i * d + j] += g[r * d + j];
                        }
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = rows_cols(&nodes[a.0].shape);
                let n = nodes[b.0].shape[1];
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(ga) = slot!(*a) {
                    matmul_bt_acc(g, bv, ga, m, k, n);
                }
                if let Some(gb) = slot!(*b) {
                    matmul_at_acc(av, g, gb, m, k, n);
                }
            }
            Op::Transpose(a) => {
                let (m, n) = (node.shape[0], node.shape[1]);
                if let Some(ga) = slot!(*a) {
                    for (x, y) in ga.iter_mut().zip(transpose(g, m, n)) {
                        *x += y;
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) {
                    -T::one()
                } else {
                    T::one()
                };
                if let Some(ga) = slot!(*a) {
                    ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y);
                }
                if let Some(gb) = slot!(*b) {
                    gb.iter_mut().zip(g).for_each(|(x, &y)| *x += sign * y);
                }
            }
            Op::AddRow(a, b) => {
                if let Some(ga) = slot!(*a) {
                    ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y);
                }
                if let Some(gb) = slot!(*b) {
                    let n = gb.len();
                    for row in g.chunks(n) {
                        gb.iter_mut().zip(row).for_each(|(x, &y)| *x += y);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(ga) = slot!(*a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                }
                if let Some(gb) = slot!(*b) {
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                }
            }
            Op::Tanh(a) => {
                let y = &node.value;
                if let Some(ga) = slot!(*a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * (T::one() - y[i] * y[i]);
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                if let Some(ga) = slot!(*a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * y[i] * (T::one() - y[i]);
                    }
                }
            }
            Op::OneMinus(a) => {
                if let Some(ga) = slot!(*a) {
                    ga.iter_mut().zip(g).for_each(|(x, &y)| *x -= y);
                }
            }
            Op::Scale(a, c) => {
                if let Some(ga) = slot!(*a) {
                    ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y * *c);
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = slot!(*a) {
                    ga.iter_mut().for_each(|x| *x += g[0]);
                }
            }
            Op::Concat { parts, axis } => {
                let outer: usize = node.shape[..*axis].iter().product();
                let inner: usize = node.shape[axis + 1..].iter().product();
                let row = node.shape[*axis] * inner;
                let mut offset = 0;
                for &p in parts {
                    let chunk = nodes[p.0].shape[*axis] * inner;
                    if let Some(gp) = slot!(p) {
                        for o in 0..outer {
                            let src = &g[o * row + offset..o * row + offset + chunk];
                            gp[o * chunk..(o + 1) * chunk]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(x, &y)| *x += y);
                        }
                    }
                    offset += chunk;
                }
            }
            Op::Stack(parts) => {
                let d = node.shape[1];
                for (r, &p) in parts.iter().enumerate() {
                    if let Some(gp) = slot!(p) {
                        gp.iter_mut()
                            .zip(&g[r * d..(r + 1) * d])
                            .for_each(|(x, &y)| *x += y);
                    }
                }
            }
            Op::SliceRows { input, start } => {
                let n = node.shape[1];
                if let Some(ga) = slot!(*input) {
                    ga[start * n..start * n + g.len()]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(x, &y)| *x += y);
                }
            }
            Op::Reshape(a) => {
                if let Some(ga) = slot!(*a) {
                    ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y);
                }
            }
            Op::MaskedSoftmax { input, valid } => {
                let (m, n) = rows_cols(&node.shape);
                let y = &node.value;
                if let Some(ga) = slot!(*input) {
                    for r in 0..m {
                        let (yr, gr) = (&y[r * n..r * n + *valid], &g[r * n..r * n + *valid]);
                        let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                        for j in 0..*valid {
                            ga[r * n + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::MaxOverTime { input, argmax } => {
                let d = argmax.len();
                if let Some(ga) = slot!(*input) {
                    for (j, &t) in argmax.iter().enumerate() {
                        ga[t * d + j] += g[j];
                    }
                }
            }
            Op::Dropout { input, mask } => {
                if let Some(ga) = slot!(*input) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * mask[i];
                    }
                }
            }
            Op::WeightedNllLog2 {
                probs,
                targets,
                norm,
            } => {
                let p = self.value(*probs);
                let ln2 = T::lit(std::f64::consts::LN_2);
                if let Some(gp) = slot!(*probs) {
                    for &(flat, live, w) in targets {
                        if live == 1 && w != T::zero() {
                            gp[flat] -= g[0] * w / (*norm * ln2 * p[flat]);
                        }
                    }
                }
            }
        }
    }

    /// Consumes the graph, returning the gradient collected for each parameter.
    pub fn into_param_grads(self) -> Vec<(ParamId, Vec<T>)> {
        let mut out: Vec<(ParamId, Vec<T>)> = self
            .param_vars
            .into_iter()
            .filter_map(|(id, v)| {
                let node = &self.nodes[v.0];
                node.grad.clone().map(|g| (id, g))
            })
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }
}

fn softmax_rows<T: Scalar>(x: &[T], m: usize, n: usize, live_rows: usize, valid: usize) -> Vec<T> {
    let fill = T::lit(MASK_FILL);
    let mut out = vec![T::zero(); m * n];
    for r in 0..live_rows {
        let row = &x[r * n..(r + 1) * n];
        let masked: Vec<T> = (0..n)
            .map(|j| if j < valid { row[j] } else { row[j] + fill })
            .collect();
        let max = masked.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = masked.iter().map(|&v| (v - max).exp()).collect();
        let z: T = exps[..valid].iter().copied().sum();
        for j in 0..valid {
            out[r * n + j] = exps[j] / z;
        }
    }
    out
}

fn grad_slot<'a, T: Scalar>(
    nodes: &[Node<T>],
    grads: &'a mut [Option<Vec<T>>],
    v: Var,
) -> Option<&'a mut Vec<T>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let len = nodes[v.0].shape.iter().product();
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); len]))
}
