use std::rc::Rc;

use crate::autodiff::pool::{PoolGeometry, PoolIndices};
use crate::autodiff::tensor::{numel, ParamId, ParamStore, Tensor};
use crate::autodiff::{AutodiffError, Result};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    MatMul { a: Var, b: Var, r: usize, k: usize, c: usize },
    MatVec { w: Var, x: Var, r: usize, c: usize },
    Transpose { a: Var, r: usize, c: usize },
    AddRow { a: Var, v: Var, c: usize },
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Concat(Vec<Var>),
    Stack(Vec<Var>),
    Slice { a: Var, start: usize },
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    Softmax(Var),
    ConvDay { cube: Var, kernels: Var, bias: Var, t: usize, m: usize, n: usize, j: usize },
    Conv1d { x: Var, w: Var, b: Var, len: usize, cin: usize, cout: usize, k: usize },
    MaxPool { x: Var, idx: Rc<PoolIndices> },
    Unpool { x: Var, idx: Rc<PoolIndices>, target: usize },
    AdaptiveAvg { x: Var, in_len: usize, out_len: usize, c: usize },
}

#[derive(Debug)]
struct Node<T> {
    value: Vec<T>,
    shape: Vec<usize>,
    op: Op<T>,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Define-by-run computation record. Nodes are appended in evaluation order,
/// so reverse insertion order is a valid topological order for backward.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

fn mismatch(op: &'static str, expected: &[usize], got: &[usize]) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        expected: expected.to_vec(),
        got: got.to_vec(),
    }
}

/// Row ranges used by adaptive average pooling (`floor(i*L/out)..ceil((i+1)*L/out)`).
pub fn adaptive_ranges(in_len: usize, out_len: usize) -> Vec<(usize, usize)> {
    (0..out_len)
        .map(|i| {
            let start = i * in_len / out_len;
            let end = ((i + 1) * in_len).div_ceil(out_len);
            (start, end.max(start + 1))
        })
        .collect()
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<T>, shape: Vec<usize>, op: Op<T>, requires_grad: bool) -> Var {
        debug_assert_eq!(value.len(), numel(&shape));
        self.nodes.push(Node {
            value,
            shape,
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Scalar value of a one-element node.
    pub fn item(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    /// Gradient accumulated for `v` by the backward passes run so far.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Records a tensor; it takes part in differentiation iff `requires_grad`.
    pub fn leaf(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.data().to_vec(), t.shape().to_vec(), Op::Leaf, t.requires_grad())
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<T>) -> Result<Var> {
        if numel(shape) != data.len() {
            return Err(mismatch("constant", &[numel(shape)], &[data.len()]));
        }
        Ok(self.push(data, shape.to_vec(), Op::Leaf, false))
    }

    pub fn vector(&mut self, data: &[T]) -> Var {
        self.push(data.to_vec(), vec![data.len()], Op::Leaf, false)
    }

    /// Binds a stored parameter; backward accumulates into its grad.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let t = store.get(id);
        let v = self.push(t.data().to_vec(), t.shape().to_vec(), Op::Leaf, true);
        self.nodes[v.0].param = Some(id);
        v
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if numel(sa) != numel(sb) {
            return Err(mismatch(op, sa, sb));
        }
        Ok(())
    }

    fn zip(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, mk: Op<T>) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, self.shape(a).to_vec(), mk, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let value = self.value(a).iter().map(|&x| f(x)).collect();
        let rg = self.rg(a);
        self.push(value, self.shape(a).to_vec(), op, rg)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        self.map(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        self.map(a, |x| x + c, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, |x| x.tanh(), Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(T::zero()), Op::Relu(a))
    }

    /// `[r,k] x [k,c] -> [r,c]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(mismatch("matmul", &sa, &sb));
        }
        let (r, k, c) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); r * c];
        let (av, bv) = (self.value(a), self.value(b));
        for i in 0..r {
            let row = &mut out[i * c..(i + 1) * c];
            for p in 0..k {
                let x = av[i * k + p];
                if x == T::zero() {
                    continue;
                }
                for (o, &y) in row.iter_mut().zip(&bv[p * c..(p + 1) * c]) {
                    *o += x * y;
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, vec![r, c], Op::MatMul { a, b, r, k, c }, rg))
    }

    /// `[r,c] x [c] -> [r]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (sw, sx) = (self.shape(w).to_vec(), self.shape(x).to_vec());
        if sw.len() != 2 || numel(&sx) != sw[1] {
            return Err(mismatch("matvec", &sw, &sx));
        }
        let (r, c) = (sw[0], sw[1]);
        let (wv, xv) = (self.value(w), self.value(x));
        let out = (0..r).map(|i| dot(&wv[i * c..(i + 1) * c], xv)).collect();
        let rg = self.rg(w) || self.rg(x);
        Ok(self.push(out, vec![r], Op::MatVec { w, x, r, c }, rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(AutodiffError::Rank { op: "transpose", expected: 2, got: s.len() });
        }
        let (r, c) = (s[0], s[1]);
        let av = self.value(a);
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = av[i * c + j];
            }
        }
        let rg = self.rg(a);
        Ok(self.push(out, vec![c, r], Op::Transpose { a, r, c }, rg))
    }

    /// Adds vector `v` (length c) to every row of `a` (`[r,c]`).
    pub fn add_row(&mut self, a: Var, v: Var) -> Result<Var> {
        let (sa, sv) = (self.shape(a).to_vec(), self.shape(v).to_vec());
        if sa.len() != 2 || numel(&sv) != sa[1] {
            return Err(mismatch("add_row", &sa, &sv));
        }
        let c = sa[1];
        let vv = self.value(v).to_vec();
        let out = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(i, &x)| x + vv[i % c])
            .collect();
        let rg = self.rg(a) || self.rg(v);
        Ok(self.push(out, sa, Op::AddRow { a, v, c }, rg))
    }

    /// Flattening concatenation into a 1-D node.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(AutodiffError::Empty("concat"));
        }
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let len = out.len();
        Ok(self.push(out, vec![len], Op::Concat(parts.to_vec()), rg))
    }

    /// Stacks equal-length nodes as rows of a `[k, len]` matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let Some(&first) = rows.first() else {
            return Err(AutodiffError::Empty("stack"));
        };
        let len = self.value(first).len();
        let mut out = Vec::with_capacity(len * rows.len());
        for &r in rows {
            if self.value(r).len() != len {
                return Err(mismatch("stack", &[len], self.shape(r)));
            }
            out.extend_from_slice(self.value(r));
        }
        let rg = rows.iter().any(|&p| self.rg(p));
        Ok(self.push(out, vec![rows.len(), len], Op::Stack(rows.to_vec()), rg))
    }

    /// Contiguous 1-D slice of the flattened value.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let total = self.value(a).len();
        if len == 0 || start + len > total {
            return Err(AutodiffError::OutOfRange {
                op: "slice",
                index: start + len,
                bound: total,
            });
        }
        let out = self.value(a)[start..start + len].to_vec();
        let rg = self.rg(a);
        Ok(self.push(out, vec![len], Op::Slice { a, start }, rg))
    }

    /// Row `r` of a 2-D node.
    pub fn row(&mut self, a: Var, r: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(AutodiffError::Rank { op: "row", expected: 2, got: s.len() });
        }
        if r >= s[0] {
            return Err(AutodiffError::OutOfRange { op: "row", index: r, bound: s[0] });
        }
        self.slice(a, r * s[1], s[1])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.value(a).len() {
            return Err(mismatch("reshape", shape, self.shape(a)));
        }
        let out = self.value(a).to_vec();
        let rg = self.rg(a);
        Ok(self.push(out, shape.to_vec(), Op::Reshape(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().copied().sum();
        let rg = self.rg(a);
        self.push(vec![s], vec![1], Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s: T = v.iter().copied().sum::<T>() / T::from_usize(v.len()).unwrap();
        let rg = self.rg(a);
        self.push(vec![s], vec![1], Op::Mean(a), rg)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let p = self.mul(a, b)?;
        Ok(self.sum(p))
    }

    /// Numerically stable softmax over the flattened value.
    pub fn softmax(&mut self, a: Var) -> Var {
        let out = softmax(self.value(a));
        let rg = self.rg(a);
        self.push(out, self.shape(a).to_vec(), Op::Softmax(a), rg)
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, pred: Var, target: &[T]) -> Result<Var> {
        let t = self.constant(self.shape(pred).to_vec().as_slice(), target.to_vec())?;
        let d = self.sub(pred, t)?;
        let sq = self.mul(d, d)?;
        Ok(self.mean(sq))
    }

    /// Day-wise full-extent convolution with ReLU.
    ///
    /// `cube` is `[t, m, n]` (days, stocks, indicators), `kernels` is
    /// `[J, n, m]`, `bias` is `[J]`; the result is `[t, J]` where column `j`
    /// is the feature map of kernel `j`.
    pub fn conv_day(&mut self, cube: Var, kernels: Var, bias: Var) -> Result<Var> {
        let sc = self.shape(cube).to_vec();
        let sk = self.shape(kernels).to_vec();
        if sc.len() != 3 {
            return Err(AutodiffError::Rank { op: "conv_day", expected: 3, got: sc.len() });
        }
        let (t, m, n) = (sc[0], sc[1], sc[2]);
        if sk.len() != 3 || sk[1] != n || sk[2] != m {
            return Err(mismatch("conv_day", &[sk.first().copied().unwrap_or(0), n, m], &sk));
        }
        let j = sk[0];
        if numel(self.shape(bias)) != j {
            return Err(mismatch("conv_day", &[j], self.shape(bias)));
        }
        let (cv, kv, bv) = (self.value(cube), self.value(kernels), self.value(bias));
        let mut out = vec![T::zero(); t * j];
        let mut xt = vec![T::zero(); m * n];
        for d in 0..t {
            transpose_day(&cv[d * m * n..(d + 1) * m * n], m, n, &mut xt);
            for jj in 0..j {
                let pre = bv[jj] + dot(&kv[jj * n * m..(jj + 1) * n * m], &xt);
                out[d * j + jj] = pre.max(T::zero());
            }
        }
        let rg = self.rg(cube) || self.rg(kernels) || self.rg(bias);
        Ok(self.push(out, vec![t, j], Op::ConvDay { cube, kernels, bias, t, m, n, j }, rg))
    }

    /// Zero-padded "same" 1-D convolution along rows.
    ///
    /// `x` is `[len, cin]`, `w` is `[cout, cin, k]` with odd `k`, `b` is
    /// `[cout]`; the result is `[len, cout]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sx.len() != 2 || sw.len() != 3 || sw[1] != sx[1] || sw[2] % 2 == 0 {
            return Err(mismatch("conv1d", &sx, &sw));
        }
        let (len, cin, cout, k) = (sx[0], sx[1], sw[0], sw[2]);
        if numel(self.shape(b)) != cout {
            return Err(mismatch("conv1d", &[cout], self.shape(b)));
        }
        let pad = k / 2;
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let mut out = vec![T::zero(); len * cout];
        for l in 0..len {
            for o in 0..cout {
                let mut acc = bv[o];
                for kk in 0..k {
                    let Some(src) = (l + kk).checked_sub(pad).filter(|&s| s < len) else {
                        continue;
                    };
                    let xrow = &xv[src * cin..(src + 1) * cin];
                    for (c, &xc) in xrow.iter().enumerate() {
                        acc += wv[(o * cin + c) * k + kk] * xc;
                    }
                }
                out[l * cout + o] = acc;
            }
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(out, vec![len, cout], Op::Conv1d { x, w, b, len, cin, cout, k }, rg))
    }

    /// Non-overlapping max pooling that records argmax positions.
    pub fn maxpool(&mut self, x: Var, window: usize, axis: usize) -> Result<(Var, Rc<PoolIndices>)> {
        let (out, idx) = crate::autodiff::pool::pool_forward(self.value(x), self.shape(x), window, axis)?;
        let idx = Rc::new(idx);
        let rg = self.rg(x);
        let shape = idx.output_shape.clone();
        let v = self.push(out, shape, Op::MaxPool { x, idx: Rc::clone(&idx) }, rg);
        Ok((v, idx))
    }

    /// Scatters `x` (shaped like the pooled output) back to the recorded
    /// argmax positions of a tensor whose pooled axis has `target_len` rows.
    pub fn unpool(&mut self, x: Var, idx: &Rc<PoolIndices>, target_len: usize) -> Result<Var> {
        if self.shape(x) != idx.output_shape.as_slice() {
            return Err(mismatch("unpool", &idx.output_shape, self.shape(x)));
        }
        let (out, shape) = crate::autodiff::pool::unpool_values(self.value(x), idx, target_len)?;
        let rg = self.rg(x);
        Ok(self.push(out, shape, Op::Unpool { x, idx: Rc::clone(idx), target: target_len }, rg))
    }

    /// Adaptive average pooling of `[in_len, c]` rows down (or up) to `out_len` rows.
    pub fn adaptive_avg_pool(&mut self, x: Var, out_len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || out_len == 0 {
            return Err(AutodiffError::Rank { op: "adaptive_avg_pool", expected: 2, got: s.len() });
        }
        let (in_len, c) = (s[0], s[1]);
        let xv = self.value(x);
        let mut out = vec![T::zero(); out_len * c];
        for (i, (a, e)) in adaptive_ranges(in_len, out_len).into_iter().enumerate() {
            let inv = T::one() / T::from_usize(e - a).unwrap();
            for r in a..e {
                for ch in 0..c {
                    out[i * c + ch] += xv[r * c + ch] * inv;
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(out, vec![out_len, c], Op::AdaptiveAvg { x, in_len, out_len, c }, rg))
    }

    /// Reverse pass from a scalar `loss`. Gradients accumulate into
    /// [`Tape::grad`] across repeated calls.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let grads = self.run_backward(loss)?;
        if self.grads.len() < grads.len() {
            self.grads.resize(grads.len(), None);
        }
        for (acc, g) in self.grads.iter_mut().zip(grads) {
            match (acc.as_mut(), g) {
                (Some(a), Some(g)) => a.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                (None, Some(g)) => *acc = Some(g),
                _ => {}
            }
        }
        Ok(())
    }

    /// Reverse pass that accumulates into the bound parameters' grads.
    pub fn backward_into(&mut self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        let grads = self.run_backward(loss)?;
        for (node, g) in self.nodes.iter().zip(&grads) {
            if let (Some(id), Some(g)) = (node.param, g) {
                store.get_mut(id).accumulate_grad(g);
            }
        }
        Ok(())
    }

    fn run_backward(&self, loss: Var) -> Result<Vec<Option<Vec<T>>>> {
        let ls = self.shape(loss);
        if numel(ls) != 1 {
            return Err(AutodiffError::NonScalarLoss(ls.to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        if !self.rg(loss) {
            return Ok(grads);
        }
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(grads)
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let len = nodes[v.0].value.len();
            let buf = grads[v.0].get_or_insert_with(|| vec![T::zero(); len]);
            f(buf);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d -= g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                acc(*a, &mut |d| {
                    for ((d, &g), &y) in d.iter_mut().zip(g).zip(bv) {
                        *d += g * y;
                    }
                });
                acc(*b, &mut |d| {
                    for ((d, &g), &x) in d.iter_mut().zip(g).zip(av) {
                        *d += g * x;
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d += g * *c)),
            Op::AddScalar(a) | Op::Reshape(a) => acc(*a, &mut |d| add_into(d, g)),
            Op::Tanh(a) => acc(*a, &mut |d| {
                for ((d, &g), &y) in d.iter_mut().zip(g).zip(&node.value) {
                    *d += g * (T::one() - y * y);
                }
            }),
            Op::Sigmoid(a) => acc(*a, &mut |d| {
                for ((d, &g), &y) in d.iter_mut().zip(g).zip(&node.value) {
                    *d += g * y * (T::one() - y);
                }
            }),
            Op::Relu(a) => acc(*a, &mut |d| {
                for ((d, &g), &y) in d.iter_mut().zip(g).zip(&node.value) {
                    if y > T::zero() {
                        *d += g;
                    }
                }
            }),
            Op::MatMul { a, b, r, k, c } => {
                let (r, k, c) = (*r, *k, *c);
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                acc(*a, &mut |d| {
                    for i in 0..r {
                        let grow = &g[i * c..(i + 1) * c];
                        for p in 0..k {
                            d[i * k + p] += dot(grow, &bv[p * c..(p + 1) * c]);
                        }
                    }
                });
                acc(*b, &mut |d| {
                    for i in 0..r {
                        let grow = &g[i * c..(i + 1) * c];
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x == T::zero() {
                                continue;
                            }
                            for (dd, &gg) in d[p * c..(p + 1) * c].iter_mut().zip(grow) {
                                *dd += x * gg;
                            }
                        }
                    }
                });
            }
            Op::MatVec { w, x, r, c } => {
                let (r, c) = (*r, *c);
                let (wv, xv) = (&nodes[w.0].value, &nodes[x.0].value);
                acc(*w, &mut |d| {
                    for i in 0..r {
                        let gi = g[i];
                        if gi == T::zero() {
                            continue;
                        }
                        for (dd, &xx) in d[i * c..(i + 1) * c].iter_mut().zip(xv) {
                            *dd += gi * xx;
                        }
                    }
                });
                acc(*x, &mut |d| {
                    for i in 0..r {
                        let gi = g[i];
                        if gi == T::zero() {
                            continue;
                        }
                        for (dd, &ww) in d.iter_mut().zip(&wv[i * c..(i + 1) * c]) {
                            *dd += gi * ww;
                        }
                    }
                });
            }
            Op::Transpose { a, r, c } => acc(*a, &mut |d| {
                for i in 0..*r {
                    for j in 0..*c {
                        d[i * c + j] += g[j * r + i];
                    }
                }
            }),
            Op::AddRow { a, v, c } => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*v, &mut |d| {
                    for (i, &gg) in g.iter().enumerate() {
                        d[i % c] += gg;
                    }
                });
            }
            Op::Concat(parts) | Op::Stack(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = nodes[p.0].value.len();
                    acc(p, &mut |d| add_into(d, &g[off..off + len]));
                    off += len;
                }
            }
            Op::Slice { a, start } => acc(*a, &mut |d| add_into(&mut d[*start..*start + g.len()], g)),
            Op::Sum(a) => acc(*a, &mut |d| d.iter_mut().for_each(|d| *d += g[0])),
            Op::Mean(a) => {
                let len = nodes[a.0].value.len();
                let s = g[0] / T::from_usize(len).unwrap();
                acc(*a, &mut |d| d.iter_mut().for_each(|d| *d += s));
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let gy: T = g.iter().zip(y).map(|(&g, &y)| g * y).sum();
                acc(*a, &mut |d| {
                    for ((d, &g), &y) in d.iter_mut().zip(g).zip(y) {
                        *d += y * (g - gy);
                    }
                });
            }
            Op::ConvDay { cube, kernels, bias, t, m, n, j } => {
                let (t, m, n, j) = (*t, *m, *n, *j);
                let gp: Vec<T> = g
                    .iter()
                    .zip(&node.value)
                    .map(|(&g, &y)| if y > T::zero() { g } else { T::zero() })
                    .collect();
                let cv = &nodes[cube.0].value;
                let kv = &nodes[kernels.0].value;
                acc(*bias, &mut |d| {
                    for row in gp.chunks(j) {
                        add_into(d, row);
                    }
                });
                acc(*kernels, &mut |d| {
                    let mut xt = vec![T::zero(); m * n];
                    for day in 0..t {
                        transpose_day(&cv[day * m * n..(day + 1) * m * n], m, n, &mut xt);
                        for jj in 0..j {
                            let s = gp[day * j + jj];
                            if s == T::zero() {
                                continue;
                            }
                            for (dd, &x) in d[jj * n * m..(jj + 1) * n * m].iter_mut().zip(&xt) {
                                *dd += s * x;
                            }
                        }
                    }
                });
                acc(*cube, &mut |d| {
                    let mut dxt = vec![T::zero(); m * n];
                    for day in 0..t {
                        dxt.iter_mut().for_each(|x| *x = T::zero());
                        for jj in 0..j {
                            let s = gp[day * j + jj];
                            if s == T::zero() {
                                continue;
                            }
                            for (dd, &kk) in dxt.iter_mut().zip(&kv[jj * n * m..(jj + 1) * n * m]) {
                                *dd += s * kk;
                            }
                        }
                        let dst = &mut d[day * m * n..(day + 1) * m * n];
                        for mm in 0..m {
                            for nn in 0..n {
                                dst[mm * n + nn] += dxt[nn * m + mm];
                            }
                        }
                    }
                });
            }
            Op::Conv1d { x, w, b, len, cin, cout, k } => {
                let (len, cin, cout, k) = (*len, *cin, *cout, *k);
                let pad = k / 2;
                let (xv, wv) = (&nodes[x.0].value, &nodes[w.0].value);
                acc(*b, &mut |d| {
                    for row in g.chunks(cout) {
                        add_into(d, row);
                    }
                });
                acc(*w, &mut |d| {
                    for l in 0..len {
                        for kk in 0..k {
                            let Some(src) = (l + kk).checked_sub(pad).filter(|&s| s < len) else {
                                continue;
                            };
                            for o in 0..cout {
                                let go = g[l * cout + o];
                                if go == T::zero() {
                                    continue;
                                }
                                for c in 0..cin {
                                    d[(o * cin + c) * k + kk] += go * xv[src * cin + c];
                                }
                            }
                        }
                    }
                });
                acc(*x, &mut |d| {
                    for l in 0..len {
                        for kk in 0..k {
                            let Some(src) = (l + kk).checked_sub(pad).filter(|&s| s < len) else {
                                continue;
                            };
                            for o in 0..cout {
                                let go = g[l * cout + o];
                                if go == T::zero() {
                                    continue;
                                }
                                for c in 0..cin {
                                    d[src * cin + c] += go * wv[(o * cin + c) * k + kk];
                                }
                            }
                        }
                    }
                });
            }
            Op::MaxPool { x, idx } => acc(*x, &mut |d| {
                let geo = PoolGeometry::of(idx);
                for o in 0..geo.outer {
                    for p in 0..geo.out_len {
                        for i in 0..geo.inner {
                            let out_pos = (o * geo.out_len + p) * geo.inner + i;
                            let src = (o * geo.len + idx.argmax[out_pos]) * geo.inner + i;
                            d[src] += g[out_pos];
                        }
                    }
                }
            }),
            Op::Unpool { x, idx, target } => acc(*x, &mut |d| {
                let geo = PoolGeometry::of(idx);
                for o in 0..geo.outer {
                    for p in 0..geo.out_len {
                        for i in 0..geo.inner {
                            let pooled = (o * geo.out_len + p) * geo.inner + i;
                            let dst = (o * target + idx.argmax[pooled]) * geo.inner + i;
                            d[pooled] += g[dst];
                        }
                    }
                }
            }),
            Op::AdaptiveAvg { x, in_len, out_len, c } => acc(*x, &mut |d| {
                for (i, (a, e)) in adaptive_ranges(*in_len, *out_len).into_iter().enumerate() {
                    let inv = T::one() / T::from_usize(e - a).unwrap();
                    for r in a..e {
                        for ch in 0..*c {
                            d[r * c + ch] += g[i * c + ch] * inv;
                        }
                    }
                }
            }),
        }
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s0 = T::zero();
    let mut s1 = T::zero();
    let mut s2 = T::zero();
    let mut s3 = T::zero();
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let p = i * 4;
        s0 += a[p] * b[p];
        s1 += a[p + 1] * b[p + 1];
        s2 += a[p + 2] * b[p + 2];
        s3 += a[p + 3] * b[p + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for p in chunks * 4..a.len() {
        s += a[p] * b[p];
    }
    s
}

fn add_into<T: Scalar>(d: &mut [T], g: &[T]) {
    d.iter_mut().zip(g).for_each(|(d, &g)| *d += g);
}

/// Writes the `[m, n]` day slice as `[n, m]`.
fn transpose_day<T: Scalar>(src: &[T], m: usize, n: usize, dst: &mut [T]) {
    for mm in 0..m {
        for nn in 0..n {
            dst[nn * m + mm] = src[mm * n + nn];
        }
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn softmax<T: Scalar>(x: &[T]) -> Vec<T> {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}
