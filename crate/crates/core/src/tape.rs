//! Reverse-mode differentiation over a recording tape.
//!
//! Every operation appends one node holding its forward value and the inputs
//! it was computed from. Node indices are a topological order, so
//! [`Tape::backward`] walks them once in reverse. Inputs are never mutated.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result, Shape};
use crate::math;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Rows grouped in compressed form: group `g` is
/// `indices[offsets[g]..offsets[g + 1]]`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RowGroups {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl RowGroups {
    pub fn from_lists<I, L>(lists: I) -> Self
    where
        I: IntoIterator<Item = L>,
        L: AsRef<[usize]>,
    {
        let mut offsets = vec![0];
        let mut indices = Vec::new();
        for l in lists {
            indices.extend_from_slice(l.as_ref());
            offsets.push(indices.len());
        }
        RowGroups { offsets, indices }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn group(&self, g: usize) -> &[usize] {
        &self.indices[self.offsets[g]..self.offsets[g + 1]]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> + '_ {
        (0..self.len()).map(move |g| self.group(g))
    }

    pub fn total(&self) -> usize {
        self.indices.len()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.indices.iter().copied().max()
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Affine(Var, f64),
    Concat(Var, Var),
    RowMean(Var),
    Sum(Var),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Clamp(Var, f64, f64),
    Softmax(Var),
    Gather(Var, Vec<usize>),
    GroupMean(Var, Arc<RowGroups>),
    Stack(Vec<Var>),
    Reshape(Var),
    MulConst(Var, Tensor),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that requires them.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros shaped like it when nothing flowed there.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let s = tape.value(v).shape();
                Tensor::zeros(s.0, s.1)
            }
        }
    }
}

fn mismatch(op: &'static str, a: Shape, b: Shape) -> Error {
    Error::Shape { op, lhs: a, rhs: b }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf: gradients are accumulated for it.
    pub fn param(&mut self, t: Tensor) -> Result<Var> {
        self.push("param", t, Op::Leaf, true)
    }

    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push("constant", t, Op::Leaf, false)
    }

    /// `a · b` for `a: n×k`, `b: k×m`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(mismatch("matmul", sa, sb));
        }
        let (n, k, m) = (sa.0, sa.1, sb.1);
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let orow = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let xv = x[i * k + p];
                if xv == 0.0 {
                    continue;
                }
                let yrow = &y[p * m..(p + 1) * m];
                for (o, &yv) in orow.iter_mut().zip(yrow) {
                    *o += xv * yv;
                }
            }
        }
        let rg = self.rg(&[a, b]);
        self.push("matmul", Tensor::new(n, m, out)?, Op::MatMul(a, b), rg)
    }

    /// `a · bᵀ` for `a: n×k`, `b: m×k`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.1 {
            return Err(mismatch("matmul_nt", sa, sb));
        }
        let (n, k, m) = (sa.0, sa.1, sb.0);
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            let xr = &x[i * k..(i + 1) * k];
            for j in 0..m {
                out.push(dot(xr, &y[j * k..(j + 1) * k]));
            }
        }
        let rg = self.rg(&[a, b]);
        self.push("matmul_nt", Tensor::new(n, m, out)?, Op::MatMulNt(a, b), rg)
    }

    fn zip_same(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(mismatch(name, sa, sb));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(&[a, b]);
        self.push(name, Tensor::new(sa.0, sa.1, data)?, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds the `1 × m` row `r` to every row of `a`.
    pub fn add_row(&mut self, a: Var, r: Var) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(r));
        if sr.0 != 1 || sr.1 != sa.1 {
            return Err(mismatch("add_row", sa, sr));
        }
        let row = self.value(r).data();
        let data = self
            .value(a)
            .data()
            .chunks(sa.1.max(1))
            .flat_map(|ch| ch.iter().zip(row).map(|(x, y)| x + y))
            .collect();
        let rg = self.rg(&[a, r]);
        self.push("add_row", Tensor::new(sa.0, sa.1, data)?, Op::AddRow(a, r), rg)
    }

    /// Scales row `i` of `a` by `c[i]`, with `c: n×1`.
    pub fn mul_col(&mut self, a: Var, c: Var) -> Result<Var> {
        let (sa, sc) = (self.shape(a), self.shape(c));
        if sc.1 != 1 || sc.0 != sa.0 {
            return Err(mismatch("mul_col", sa, sc));
        }
        let col = self.value(c).data();
        let mut data = self.value(a).data().to_vec();
        if sa.1 > 0 {
            for (ch, &s) in data.chunks_mut(sa.1).zip(col) {
                ch.iter_mut().for_each(|x| *x *= s);
            }
        }
        let rg = self.rg(&[a, c]);
        self.push("mul_col", Tensor::new(sa.0, sa.1, data)?, Op::MulCol(a, c), rg)
    }

    /// `scale · a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        let s = self.shape(a);
        let data = self.value(a).data().iter().map(|x| scale * x + shift).collect();
        let rg = self.rg(&[a]);
        self.push("affine", Tensor::new(s.0, s.1, data)?, Op::Affine(a, scale), rg)
    }

    pub fn scale(&mut self, a: Var, scale: f64) -> Result<Var> {
        self.affine(a, scale, 0.0)
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.0 != sb.0 {
            return Err(mismatch("concat", sa, sb));
        }
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(sa.0 * (sa.1 + sb.1));
        for i in 0..sa.0 {
            data.extend_from_slice(&x[i * sa.1..(i + 1) * sa.1]);
            data.extend_from_slice(&y[i * sb.1..(i + 1) * sb.1]);
        }
        let rg = self.rg(&[a, b]);
        self.push("concat", Tensor::new(sa.0, sa.1 + sb.1, data)?, Op::Concat(a, b), rg)
    }

    /// Mean over rows, giving `1 × m`.
    pub fn row_mean(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.0 == 0 {
            return Err(Error::invalid("row_mean of a tensor with zero rows"));
        }
        let mut out = vec![0.0; s.1];
        for r in self.value(a).data().chunks(s.1.max(1)) {
            out.iter_mut().zip(r).for_each(|(o, x)| *o += x);
        }
        let inv = 1.0 / s.0 as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        let rg = self.rg(&[a]);
        self.push("row_mean", Tensor::new(1, s.1, out)?, Op::RowMean(a), rg)
    }

    /// Sum of all entries, giving `1 × 1`.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.value(a).data().iter().sum();
        let rg = self.rg(&[a]);
        self.push("sum", Tensor::scalar(total), Op::Sum(a), rg)
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let s = self.shape(a);
        let data = self.value(a).data().iter().map(|&x| f(x)).collect();
        let rg = self.rg(&[a]);
        self.push(name, Tensor::new(s.0, s.1, data)?, op, rg)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, math::sigmoid, Op::Sigmoid(a))
    }

    /// Natural log; non-positive inputs fail as non-finite.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary("log", a, math::ln, Op::Log(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary("clamp", a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// Softmax along the last axis, max-subtracted.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        let mut data = self.value(a).data().to_vec();
        if s.1 > 0 {
            for row in data.chunks_mut(s.1) {
                softmax_in_place(row);
            }
        }
        let rg = self.rg(&[a]);
        self.push("softmax", Tensor::new(s.0, s.1, data)?, Op::Softmax(a), rg)
    }

    /// Rows of `table` at `indices`, in order (repeats allowed).
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let s = self.shape(table);
        let t = self.value(table);
        let mut data = Vec::with_capacity(indices.len() * s.1);
        for &i in indices {
            if i >= s.0 {
                return Err(Error::Index {
                    op: "gather",
                    index: i,
                    len: s.0,
                });
            }
            data.extend_from_slice(t.row(i));
        }
        let rg = self.rg(&[table]);
        self.push(
            "gather",
            Tensor::new(indices.len(), s.1, data)?,
            Op::Gather(table, indices.to_vec()),
            rg,
        )
    }

    /// One output row per group: the mean of the grouped source rows, or
    /// zeros for an empty group.
    pub fn group_mean(&mut self, src: Var, groups: &Arc<RowGroups>) -> Result<Var> {
        let s = self.shape(src);
        if let Some(m) = groups.max_index() {
            if m >= s.0 {
                return Err(Error::Index {
                    op: "group_mean",
                    index: m,
                    len: s.0,
                });
            }
        }
        let x = self.value(src);
        let mut out = vec![0.0; groups.len() * s.1];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let orow = &mut out[g * s.1..(g + 1) * s.1];
            for &m in members {
                orow.iter_mut().zip(x.row(m)).for_each(|(o, v)| *o += v);
            }
            let inv = 1.0 / members.len() as f64;
            orow.iter_mut().for_each(|o| *o *= inv);
        }
        let rg = self.rg(&[src]);
        self.push(
            "group_mean",
            Tensor::new(groups.len(), s.1, out)?,
            Op::GroupMean(src, Arc::clone(groups)),
            rg,
        )
    }

    /// Stacks tensors with equal column counts along rows.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = match parts.first() {
            Some(&p) => self.shape(p).1,
            None => return Err(Error::invalid("stack of zero tensors")),
        };
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s.1 != cols {
                return Err(mismatch("stack", Shape(rows, cols), s));
            }
            rows += s.0;
            data.extend_from_slice(self.value(p).data());
        }
        let rg = self.rg(parts);
        self.push("stack", Tensor::new(rows, cols, data)?, Op::Stack(parts.to_vec()), rg)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let s = self.shape(a);
        if s.0 * s.1 != rows * cols {
            return Err(mismatch("reshape", s, Shape(rows, cols)));
        }
        let data = self.value(a).data().to_vec();
        let rg = self.rg(&[a]);
        self.push("reshape", Tensor::new(rows, cols, data)?, Op::Reshape(a), rg)
    }

    /// Elementwise product with a constant (non-differentiated) tensor.
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        let s = self.shape(a);
        if c.shape() != s {
            return Err(mismatch("mul_const", s, c.shape()));
        }
        let data = self.value(a).data().iter().zip(c.data()).map(|(x, y)| x * y).collect();
        let rg = self.rg(&[a]);
        self.push("mul_const", Tensor::new(s.0, s.1, data)?, Op::MulConst(a, c), rg)
    }

    /// `x · wᵀ (+ b)`: a dense layer with `w: out×in` and `b: 1×out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul_nt(x, w)?;
        match b {
            Some(b) => self.add_row(y, b),
            None => Ok(y),
        }
    }

    /// Elementwise mean of equally shaped tensors.
    pub fn mean_of(&mut self, parts: &[Var]) -> Result<Var> {
        let (&first, rest) = parts
            .split_first()
            .ok_or_else(|| Error::invalid("mean of zero tensors"))?;
        if rest.is_empty() {
            return Ok(first);
        }
        let mut acc = first;
        for &p in rest {
            acc = self.add(acc, p)?;
        }
        self.scale(acc, 1.0 / parts.len() as f64)
    }

    /// Back-propagates from the `1 × 1` value `out`.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        let s = self.shape(out);
        if s != Shape(1, 1) {
            return Err(mismatch("backward", s, Shape(1, 1)));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Tensor::scalar(1.0));
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (g, n) in grads.iter_mut().zip(&self.nodes) {
            if !n.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let (n, k, m) = (x.rows(), x.cols(), y.cols());
                if self.requires_grad(*a) {
                    let ga = acc(grads, self, *a);
                    for i in 0..n {
                        for p in 0..k {
                            ga[i * k + p] += dot(&gd[i * m..(i + 1) * m], y.row(p));
                        }
                    }
                }
                if self.requires_grad(*b) {
                    let gb = acc(grads, self, *b);
                    for i in 0..n {
                        for p in 0..k {
                            let xv = x.get(i, p);
                            if xv == 0.0 {
                                continue;
                            }
                            let grow = &gd[i * m..(i + 1) * m];
                            gb[p * m..(p + 1) * m]
                                .iter_mut()
                                .zip(grow)
                                .for_each(|(o, gv)| *o += xv * gv);
                        }
                    }
                }
            }
            Op::MatMulNt(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let (n, k, m) = (x.rows(), x.cols(), y.rows());
                if self.requires_grad(*a) {
                    let ga = acc(grads, self, *a);
                    for i in 0..n {
                        let orow = &mut ga[i * k..(i + 1) * k];
                        for j in 0..m {
                            let gv = gd[i * m + j];
                            if gv == 0.0 {
                                continue;
                            }
                            orow.iter_mut().zip(y.row(j)).for_each(|(o, yv)| *o += gv * yv);
                        }
                    }
                }
                if self.requires_grad(*b) {
                    let gb = acc(grads, self, *b);
                    for i in 0..n {
                        let xr = x.row(i);
                        for j in 0..m {
                            let gv = gd[i * m + j];
                            if gv == 0.0 {
                                continue;
                            }
                            gb[j * k..(j + 1) * k]
                                .iter_mut()
                                .zip(xr)
                                .for_each(|(o, xv)| *o += gv * xv);
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                add_into(grads, self, *a, gd, 1.0);
                add_into(grads, self, *b, gd, 1.0);
            }
            Op::Sub(a, b) => {
                add_into(grads, self, *a, gd, 1.0);
                add_into(grads, self, *b, gd, -1.0);
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a).data(), self.value(*b).data());
                if self.requires_grad(*a) {
                    let ga = acc(grads, self, *a);
                    for ((o, gv), yv) in ga.iter_mut().zip(gd).zip(y) {
                        *o += gv * yv;
                    }
                }
                if self.requires_grad(*b) {
                    let gb = acc(grads, self, *b);
                    for ((o, gv), xv) in gb.iter_mut().zip(gd).zip(x) {
                        *o += gv * xv;
                    }
                }
            }
            Op::AddRow(a, r) => {
                add_into(grads, self, *a, gd, 1.0);
                if self.requires_grad(*r) {
                    let cols = g.cols();
                    let gr = acc(grads, self, *r);
                    if cols > 0 {
                        for row in gd.chunks(cols) {
                            gr.iter_mut().zip(row).for_each(|(o, v)| *o += v);
                        }
                    }
                }
            }
            Op::MulCol(a, c) => {
                let cols = g.cols();
                let (x, cv) = (self.value(*a).data(), self.value(*c).data());
                if self.requires_grad(*a) {
                    let ga = acc(grads, self, *a);
                    for (i, &s) in cv.iter().enumerate() {
                        for j in 0..cols {
                            ga[i * cols + j] += gd[i * cols + j] * s;
                        }
                    }
                }
                if self.requires_grad(*c) {
                    let gc = acc(grads, self, *c);
                    for (i, o) in gc.iter_mut().enumerate() {
                        *o += dot(&gd[i * cols..(i + 1) * cols], &x[i * cols..(i + 1) * cols]);
                    }
                }
            }
            Op::Affine(a, scale) => add_into(grads, self, *a, gd, *scale),
            Op::Concat(a, b) => {
                let (ca, cb) = (self.shape(*a).1, self.shape(*b).1);
                let rows = g.rows();
                let w = ca + cb;
                if self.requires_grad(*a) {
                    let ga = acc(grads, self, *a);
                    for i in 0..rows {
                        for j in 0..ca {
                            ga[i * ca + j] += gd[i * w + j];
                        }
                    }
                }
                if self.requires_grad(*b) {
                    let gb = acc(grads, self, *b);
                    for i in 0..rows {
                        for j in 0..cb {
                            gb[i * cb + j] += gd[i * w + ca + j];
                        }
                    }
                }
            }
            Op::RowMean(a) => {
                if self.requires_grad(*a) {
                    let s = self.shape(*a);
                    let inv = 1.0 / s.0 as f64;
                    let ga = acc(grads, self, *a);
                    if s.1 > 0 {
                        for row in ga.chunks_mut(s.1) {
                            row.iter_mut().zip(gd).for_each(|(o, v)| *o += v * inv);
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if self.requires_grad(*a) {
                    let gv = gd[0];
                    acc(grads, self, *a).iter_mut().for_each(|o| *o += gv);
                }
            }
            Op::Relu(a) => {
                if self.requires_grad(*a) {
                    let x = self.value(*a).data();
                    let ga = acc(grads, self, *a);
                    for ((o, gv), xv) in ga.iter_mut().zip(gd).zip(x) {
                        if *xv > 0.0 {
                            *o += gv;
                        }
                    }
                }
            }
            Op::Sigmoid(a) => {
                if self.requires_grad(*a) {
                    let y = node.value.data();
                    let ga = acc(grads, self, *a);
                    for ((o, gv), yv) in ga.iter_mut().zip(gd).zip(y) {
                        *o += gv * yv * (1.0 - yv);
                    }
                }
            }
            Op::Log(a) => {
                if self.requires_grad(*a) {
                    let x = self.value(*a).data();
                    let ga = acc(grads, self, *a);
                    for ((o, gv), xv) in ga.iter_mut().zip(gd).zip(x) {
                        *o += gv / xv;
                    }
                }
            }
            Op::Clamp(a, lo, hi) => {
                if self.requires_grad(*a) {
                    let x = self.value(*a).data();
                    let ga = acc(grads, self, *a);
                    for ((o, gv), xv) in ga.iter_mut().zip(gd).zip(x) {
                        if *xv >= *lo && *xv <= *hi {
                            *o += gv;
                        }
                    }
                }
            }
            Op::Softmax(a) => {
                if self.requires_grad(*a) {
                    let cols = g.cols();
                    let y = node.value.data();
                    let ga = acc(grads, self, *a);
                    if cols > 0 {
                        for ((orow, grow), yrow) in ga.chunks_mut(cols).zip(gd.chunks(cols)).zip(y.chunks(cols)) {
                            let inner = dot(grow, yrow);
                            for ((o, gv), yv) in orow.iter_mut().zip(grow).zip(yrow) {
                                *o += yv * (gv - inner);
                            }
                        }
                    }
                }
            }
            Op::Gather(t, idx) => {
                if self.requires_grad(*t) {
                    let cols = g.cols();
                    let gt = acc(grads, self, *t);
                    for (r, &i) in idx.iter().enumerate() {
                        gt[i * cols..(i + 1) * cols]
                            .iter_mut()
                            .zip(&gd[r * cols..(r + 1) * cols])
                            .for_each(|(o, v)| *o += v);
                    }
                }
            }
            Op::GroupMean(src, groups) => {
                if self.requires_grad(*src) {
                    let cols = g.cols();
                    let gs = acc(grads, self, *src);
                    for (gi, members) in groups.iter().enumerate() {
                        if members.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / members.len() as f64;
                        let grow = &gd[gi * cols..(gi + 1) * cols];
                        for &m in members {
                            gs[m * cols..(m + 1) * cols]
                                .iter_mut()
                                .zip(grow)
                                .for_each(|(o, v)| *o += v * inv);
                        }
                    }
                }
            }
            Op::Stack(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.requires_grad(p) {
                        acc(grads, self, p)
                            .iter_mut()
                            .zip(&gd[offset..offset + n])
                            .for_each(|(o, v)| *o += v);
                    }
                    offset += n;
                }
            }
            Op::Reshape(a) => add_into(grads, self, *a, gd, 1.0),
            Op::MulConst(a, c) => {
                if self.requires_grad(*a) {
                    let ga = acc(grads, self, *a);
                    for ((o, gv), cv) in ga.iter_mut().zip(gd).zip(c.data()) {
                        *o += gv * cv;
                    }
                }
            }
        }
    }
}

fn acc<'g>(grads: &'g mut [Option<Tensor>], tape: &Tape, v: Var) -> &'g mut [f64] {
    grads[v.0]
        .get_or_insert_with(|| {
            let s = tape.shape(v);
            Tensor::zeros(s.0, s.1)
        })
        .data_mut()
}

fn add_into(grads: &mut [Option<Tensor>], tape: &Tape, v: Var, g: &[f64], scale: f64) {
    if !tape.requires_grad(v) {
        return;
    }
    let dst = acc(grads, tape, v);
    for (o, x) in dst.iter_mut().zip(g) {
        *o += scale * x;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Max-subtracted softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = math::exp(*x - max);
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}
