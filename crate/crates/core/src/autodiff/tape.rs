use std::sync::Arc;

use super::tensor::{gemm_acc, Tensor};
use super::{AutodiffError, ParamId, ParamStore};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Affine(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    LeakyRelu(Var, f64),
    Elu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Log(Var),
    Maximum(Var, Var),
    GatherRows(Var, Arc<Vec<usize>>),
    SegmentSum(Var, Arc<Vec<usize>>),
    SegmentMax(Var, Vec<usize>),
    SegmentSoftmax(Var, Arc<Vec<usize>>),
    SumAll(Var),
    SumCols(Var),
    SumRows(Var),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf | Op::Param(_) => Vec::new(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::AddRow(a, b) | Op::Mul(a, b) | Op::MulCol(a, b) | Op::Maximum(a, b) => {
                vec![*a, *b]
            }
            Op::ConcatCols(v) | Op::ConcatRows(v) => v.clone(),
            Op::Affine(a, _)
            | Op::SliceCols(a, _)
            | Op::LeakyRelu(a, _)
            | Op::Elu(a)
            | Op::Sigmoid(a)
            | Op::Softplus(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::GatherRows(a, _)
            | Op::SegmentSum(a, _)
            | Op::SegmentMax(a, _)
            | Op::SegmentSoftmax(a, _)
            | Op::SumAll(a)
            | Op::SumCols(a)
            | Op::SumRows(a) => vec![*a],
        }
    }
}

/// Records a forward computation for a single reverse sweep.
#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<Tensor>,
    ops: Vec<Op>,
}

fn check(cond: bool, what: &str, a: (usize, usize), b: (usize, usize)) -> Result<(), AutodiffError> {
    if cond {
        Ok(())
    } else {
        Err(AutodiffError::Shape { op: what.to_string(), lhs: a, rhs: b })
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.values[v.0].shape()
    }

    /// Input or constant; receives a gradient but is never updated.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        check(sa.1 == sb.0, "matmul", sa, sb)?;
        let out = self.values[a.0].matmul(&self.values[b.0]);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn zip(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        check(sa == sb, name, sa, sb)?;
        let (x, y) = (&self.values[a.0], &self.values[b.0]);
        Ok(Tensor::from_vec(sa.0, sa.1, x.data.iter().zip(&y.data).map(|(&p, &q)| f(p, q)).collect()))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let t = self.zip(a, b, "add", |p, q| p + q)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let t = self.zip(a, b, "sub", |p, q| p - q)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let t = self.zip(a, b, "mul", |p, q| p * q)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let t = self.zip(a, b, "maximum", f64::max)?;
        Ok(self.push(t, Op::Maximum(a, b)))
    }

    /// `a + bias` with a 1×C bias broadcast over rows.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        check(sb.0 == 1 && sb.1 == sa.1, "add_row", sa, sb)?;
        let mut t = self.values[a.0].clone();
        let b = &self.values[bias.0].data;
        for r in 0..sa.0 {
            for (x, y) in t.row_mut(r).iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(self.push(t, Op::AddRow(a, bias)))
    }

    /// Scales row `i` of `a` by `c[i]` (c is R×1).
    pub fn mul_col(&mut self, a: Var, c: Var) -> Result<Var, AutodiffError> {
        let (sa, sc) = (self.shape(a), self.shape(c));
        check(sc.1 == 1 && sc.0 == sa.0, "mul_col", sa, sc)?;
        let mut t = self.values[a.0].clone();
        let cv = &self.values[c.0].data;
        for r in 0..sa.0 {
            let k = cv[r];
            t.row_mut(r).iter_mut().for_each(|x| *x *= k);
        }
        Ok(self.push(t, Op::MulCol(a, c)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    /// Division by a constant scalar.
    pub fn scalar_div(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, 1.0 / s, 0.0)
    }

    /// `a·s + shift` elementwise.
    pub fn affine(&mut self, a: Var, s: f64, shift: f64) -> Var {
        let t = self.values[a.0].map(|x| x * s + shift);
        self.push(t, Op::Affine(a, s))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let rows = parts.first().map_or(0, |p| self.shape(*p).0);
        for p in parts {
            check(self.shape(*p).0 == rows, "concat_cols", (rows, 0), self.shape(*p))?;
        }
        let cols: usize = parts.iter().map(|p| self.shape(*p).1).sum();
        let mut t = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let src = self.values[p.0].row(r);
                t.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(t, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let cols = parts.first().map_or(0, |p| self.shape(*p).1);
        for p in parts {
            check(self.shape(*p).1 == cols, "concat_rows", (0, cols), self.shape(*p))?;
        }
        let rows: usize = parts.iter().map(|p| self.shape(*p).0).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            data.extend_from_slice(&self.values[p.0].data);
        }
        Ok(self.push(Tensor::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var, AutodiffError> {
        let sa = self.shape(a);
        check(start + width <= sa.1, "slice_cols", sa, (start, width))?;
        let mut t = Tensor::zeros(sa.0, width);
        for r in 0..sa.0 {
            t.row_mut(r).copy_from_slice(&self.values[a.0].row(r)[start..start + width]);
        }
        Ok(self.push(t, Op::SliceCols(a, start)))
    }

    pub fn leaky_relu(&mut self, a: Var, beta: f64) -> Var {
        let t = self.values[a.0].map(|x| if x > 0.0 { x } else { beta * x });
        self.push(t, Op::LeakyRelu(a, beta))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let t = self.values[a.0].map(|x| if x > 0.0 { x } else { x.exp_m1() });
        self.push(t, Op::Elu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.values[a.0].map(sigmoid);
        self.push(t, Op::Sigmoid(a))
    }

    /// `log(1 + e^x)`, computed stably.
    pub fn softplus(&mut self, a: Var) -> Var {
        let t = self.values[a.0].map(softplus);
        self.push(t, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let t = self.values[a.0].map(f64::exp);
        self.push(t, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let t = self.values[a.0].map(f64::ln);
        self.push(t, Op::Log(a))
    }

    /// Row `k` of the output is row `idx[k]` of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: Arc<Vec<usize>>) -> Result<Var, AutodiffError> {
        let sa = self.shape(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= sa.0) {
            return Err(AutodiffError::Index { op: "gather_rows".into(), index: bad, len: sa.0 });
        }
        let mut t = Tensor::zeros(idx.len(), sa.1);
        for (k, &i) in idx.iter().enumerate() {
            t.row_mut(k).copy_from_slice(self.values[a.0].row(i));
        }
        Ok(self.push(t, Op::GatherRows(a, idx)))
    }

    fn check_segments(&self, a: Var, seg: &[usize], n: usize, op: &str) -> Result<(), AutodiffError> {
        let sa = self.shape(a);
        check(seg.len() == sa.0, op, sa, (seg.len(), n))?;
        if let Some(&bad) = seg.iter().find(|&&s| s >= n) {
            return Err(AutodiffError::Index { op: op.into(), index: bad, len: n });
        }
        Ok(())
    }

    /// Output row `s` is the sum of the rows of `a` whose segment id is `s`.
    pub fn segment_sum(&mut self, a: Var, seg: Arc<Vec<usize>>, n: usize) -> Result<Var, AutodiffError> {
        self.check_segments(a, &seg, n, "segment_sum")?;
        let cols = self.shape(a).1;
        let mut t = Tensor::zeros(n, cols);
        for (k, &s) in seg.iter().enumerate() {
            let src = self.values[a.0].row(k);
            for (x, y) in t.row_mut(s).iter_mut().zip(src) {
                *x += y;
            }
        }
        Ok(self.push(t, Op::SegmentSum(a, seg)))
    }

    /// Per-column maximum within each segment; empty segments give zeros.
    pub fn segment_max(&mut self, a: Var, seg: &[usize], n: usize) -> Result<Var, AutodiffError> {
        self.check_segments(a, seg, n, "segment_max")?;
        let cols = self.shape(a).1;
        let mut arg = vec![usize::MAX; n * cols];
        let x = &self.values[a.0];
        for (k, &s) in seg.iter().enumerate() {
            for c in 0..cols {
                let slot = &mut arg[s * cols + c];
                if *slot == usize::MAX || x.get(k, c) > x.get(*slot, c) {
                    *slot = k;
                }
            }
        }
        let mut t = Tensor::zeros(n, cols);
        for s in 0..n {
            for c in 0..cols {
                let k = arg[s * cols + c];
                if k != usize::MAX {
                    t.set(s, c, x.get(k, c));
                }
            }
        }
        Ok(self.push(t, Op::SegmentMax(a, arg)))
    }

    /// Softmax of each column within each segment.
    pub fn segment_softmax(&mut self, a: Var, seg: Arc<Vec<usize>>, n: usize) -> Result<Var, AutodiffError> {
        self.check_segments(a, &seg, n, "segment_softmax")?;
        let x = &self.values[a.0];
        let cols = x.cols;
        let mut mx = vec![f64::NEG_INFINITY; n * cols];
        for (k, &s) in seg.iter().enumerate() {
            for c in 0..cols {
                mx[s * cols + c] = mx[s * cols + c].max(x.get(k, c));
            }
        }
        let mut t = Tensor::zeros(x.rows, cols);
        let mut den = vec![0.0; n * cols];
        for (k, &s) in seg.iter().enumerate() {
            for c in 0..cols {
                let e = (x.get(k, c) - mx[s * cols + c]).exp();
                t.set(k, c, e);
                den[s * cols + c] += e;
            }
        }
        for (k, &s) in seg.iter().enumerate() {
            for c in 0..cols {
                let v = t.get(k, c) / den[s * cols + c];
                t.set(k, c, v);
            }
        }
        Ok(self.push(t, Op::SegmentSoftmax(a, seg)))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.values[a.0].data.iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    /// R×C → R×1 row sums.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let x = &self.values[a.0];
        let data = (0..x.rows).map(|r| x.row(r).iter().sum()).collect();
        let t = Tensor::from_vec(x.rows, 1, data);
        self.push(t, Op::SumCols(a))
    }

    /// R×C → 1×C column sums.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let x = &self.values[a.0];
        let mut t = Tensor::zeros(1, x.cols);
        for r in 0..x.rows {
            for (o, v) in t.data.iter_mut().zip(x.row(r)) {
                *o += v;
            }
        }
        self.push(t, Op::SumRows(a))
    }

    /// Reverse sweep that accumulates parameter gradients into `store`.
    /// Constants and anything computed only from constants get no gradient.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients, AutodiffError> {
        let mut needs = vec![false; self.ops.len()];
        for (i, op) in self.ops.iter().enumerate() {
            needs[i] = match op {
                Op::Leaf => false,
                Op::Param(_) => true,
                _ => op.inputs().iter().any(|v| needs[v.0]),
            };
        }
        let grads = self.sweep(loss, Some(&needs))?;
        for (i, op) in self.ops.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (op, &grads.grads[i]) {
                store.grad_mut(*id).add_assign(g);
            }
        }
        Ok(grads)
    }

    /// Reverse sweep without touching any parameter store.
    pub fn gradients(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        self.sweep(loss, None)
    }

    fn sweep(&self, loss: Var, needs: Option<&[bool]>) -> Result<Gradients, AutodiffError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(AutodiffError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.values.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_one(i, &g, &mut grads, needs);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_one(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>], needs: Option<&[bool]>) {
        let vals = &self.values;
        let y = &vals[i];
        let mut acc = |v: Var, f: &dyn Fn(&mut Tensor)| {
            if needs.is_some_and(|n| !n[v.0]) {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(vals[v.0].rows, vals[v.0].cols));
            f(slot);
        };
        match &self.ops[i] {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                acc(*a, &|t| gemm_acc(g, false, &vals[b.0], true, t));
                acc(*b, &|t| gemm_acc(&vals[a.0], true, g, false, t));
            }
            Op::Add(a, b) => {
                acc(*a, &|t| t.add_assign(g));
                acc(*b, &|t| t.add_assign(g));
            }
            Op::Sub(a, b) => {
                acc(*a, &|t| t.add_assign(g));
                acc(*b, &|t| t.data.iter_mut().zip(&g.data).for_each(|(o, v)| *o -= v));
            }
            Op::AddRow(a, bias) => {
                acc(*a, &|t| t.add_assign(g));
                acc(*bias, &|t| {
                    for r in 0..g.rows {
                        t.data.iter_mut().zip(g.row(r)).for_each(|(o, v)| *o += v);
                    }
                });
            }
            Op::Mul(a, b) => {
                acc(*a, &|t| {
                    t.data.iter_mut().zip(g.data.iter().zip(&vals[b.0].data)).for_each(|(o, (gv, bv))| *o += gv * bv)
                });
                acc(*b, &|t| {
                    t.data.iter_mut().zip(g.data.iter().zip(&vals[a.0].data)).for_each(|(o, (gv, av))| *o += gv * av)
                });
            }
            Op::MulCol(a, c) => {
                let cv = &vals[c.0];
                let av = &vals[a.0];
                acc(*a, &|t| {
                    for r in 0..g.rows {
                        let k = cv.data[r];
                        t.row_mut(r).iter_mut().zip(g.row(r)).for_each(|(o, gv)| *o += gv * k);
                    }
                });
                acc(*c, &|t| {
                    for r in 0..g.rows {
                        t.data[r] += g.row(r).iter().zip(av.row(r)).map(|(p, q)| p * q).sum::<f64>();
                    }
                });
            }
            Op::Affine(a, s) => acc(*a, &|t| t.data.iter_mut().zip(&g.data).for_each(|(o, v)| *o += s * v)),
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let w = vals[p.0].cols;
                    acc(*p, &|t| {
                        for r in 0..g.rows {
                            t.row_mut(r).iter_mut().zip(&g.row(r)[off..off + w]).for_each(|(o, v)| *o += v);
                        }
                    });
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = vals[p.0].data.len();
                    acc(*p, &|t| t.data.iter_mut().zip(&g.data[off..off + n]).for_each(|(o, v)| *o += v));
                    off += n;
                }
            }
            Op::SliceCols(a, start) => {
                let w = g.cols;
                acc(*a, &|t| {
                    for r in 0..g.rows {
                        t.row_mut(r)[*start..*start + w].iter_mut().zip(g.row(r)).for_each(|(o, v)| *o += v);
                    }
                });
            }
            Op::LeakyRelu(a, beta) => {
                let b = *beta;
                acc(*a, &|t| pointwise(t, g, &vals[a.0], y, |x, _| if x > 0.0 { 1.0 } else { b }));
            }
            Op::Elu(a) => acc(*a, &|t| pointwise(t, g, &vals[a.0], y, |x, y| if x > 0.0 { 1.0 } else { y + 1.0 })),
            Op::Sigmoid(a) => acc(*a, &|t| pointwise(t, g, &vals[a.0], y, |_, y| y * (1.0 - y))),
            Op::Softplus(a) => acc(*a, &|t| pointwise(t, g, &vals[a.0], y, |x, _| sigmoid(x))),
            Op::Exp(a) => acc(*a, &|t| pointwise(t, g, &vals[a.0], y, |_, y| y)),
            Op::Log(a) => acc(*a, &|t| pointwise(t, g, &vals[a.0], y, |x, _| 1.0 / x)),
            Op::Maximum(a, b) => {
                let (av, bv) = (&vals[a.0], &vals[b.0]);
                acc(*a, &|t| {
                    for k in 0..t.data.len() {
                        if av.data[k] >= bv.data[k] {
                            t.data[k] += g.data[k];
                        }
                    }
                });
                acc(*b, &|t| {
                    for k in 0..t.data.len() {
                        if av.data[k] < bv.data[k] {
                            t.data[k] += g.data[k];
                        }
                    }
                });
            }
            Op::GatherRows(a, idx) => acc(*a, &|t| {
                for (k, &src) in idx.iter().enumerate() {
                    t.row_mut(src).iter_mut().zip(g.row(k)).for_each(|(o, v)| *o += v);
                }
            }),
            Op::SegmentSum(a, seg) => acc(*a, &|t| {
                for (k, &s) in seg.iter().enumerate() {
                    t.row_mut(k).iter_mut().zip(g.row(s)).for_each(|(o, v)| *o += v);
                }
            }),
            Op::SegmentMax(a, arg) => {
                let cols = g.cols;
                acc(*a, &|t| {
                    for (j, &k) in arg.iter().enumerate() {
                        if k != usize::MAX {
                            t.data[k * cols + j % cols] += g.data[j];
                        }
                    }
                });
            }
            Op::SegmentSoftmax(a, seg) => {
                let cols = g.cols;
                let n = seg.iter().max().map_or(0, |m| m + 1);
                let mut dots = vec![0.0; n * cols];
                for (k, &s) in seg.iter().enumerate() {
                    for c in 0..cols {
                        dots[s * cols + c] += g.get(k, c) * y.get(k, c);
                    }
                }
                acc(*a, &|t| {
                    for (k, &s) in seg.iter().enumerate() {
                        for c in 0..cols {
                            t.data[k * cols + c] += y.get(k, c) * (g.get(k, c) - dots[s * cols + c]);
                        }
                    }
                });
            }
            Op::SumAll(a) => {
                let gv = g.data[0];
                acc(*a, &|t| t.data.iter_mut().for_each(|o| *o += gv));
            }
            Op::SumCols(a) => acc(*a, &|t| {
                for r in 0..t.rows {
                    let gv = g.data[r];
                    t.row_mut(r).iter_mut().for_each(|o| *o += gv);
                }
            }),
            Op::SumRows(a) => acc(*a, &|t| {
                for r in 0..t.rows {
                    t.row_mut(r).iter_mut().zip(&g.data).for_each(|(o, v)| *o += v);
                }
            }),
        }
    }
}

fn pointwise(t: &mut Tensor, g: &Tensor, x: &Tensor, y: &Tensor, d: impl Fn(f64, f64) -> f64) {
    for ((o, &gv), (&xv, &yv)) in t.data.iter_mut().zip(&g.data).zip(x.data.iter().zip(&y.data)) {
        *o += gv * d(xv, yv);
    }
}

/// Gradients of one reverse sweep, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of `v`; `None` when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
