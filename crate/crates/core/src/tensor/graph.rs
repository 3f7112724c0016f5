use super::kernels;
use super::{gemm, Element, Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

/// How [`Graph::cross_entropy`] reduces over the selected positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    /// `−Σ_{i∈M} log p(target_i)`.
    Sum,
    /// The sum divided by `|M|`. Default for training.
    Mean,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul { a: NodeId, b: NodeId, ta: bool, tb: bool },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow { x: NodeId, bias: NodeId },
    Scale { x: NodeId, c: T },
    Gelu(NodeId),
    Softplus(NodeId),
    Softmax { x: NodeId, axis: usize },
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId, xhat: Vec<T>, rstd: Vec<T> },
    Embedding { table: NodeId, ids: Vec<usize> },
    SliceCols { x: NodeId, start: usize },
    ConcatCols(Vec<NodeId>),
    Transpose(NodeId),
    CausalMask(NodeId),
    CrossEntropy { logits: NodeId, targets: Vec<usize>, selected: Vec<bool>, probs: Vec<T>, scale: T },
    Sum(NodeId),
    Mean(NodeId),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Operation tape. Nodes are appended in evaluation order; backward walks
/// them in exact reverse.
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    consumed: bool,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch<T: Element>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> TensorError {
    TensorError::ShapeMismatch { op, lhs: a.shape().to_vec(), rhs: b.shape().to_vec() }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), grads: Vec::new(), consumed: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { value, requires_grad, op: Op::Leaf });
        NodeId(self.nodes.len() - 1)
    }

    /// A leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> NodeId {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.leaf(value, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[NodeId]) -> NodeId {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node { value, requires_grad, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.matmul_t(a, b, false, false)
    }

    /// `x · wᵀ` for a weight stored as `out_features × in_features`.
    pub fn linear(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        self.matmul_t(x, w, false, true)
    }

    /// `op(a) · op(b)` where `op` optionally transposes.
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId, ta: bool, tb: bool) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        let (ar, ac) = va.dims2("matmul")?;
        let (br, bc) = vb.dims2("matmul")?;
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(mismatch("matmul", va, vb));
        }
        let mut out = vec![T::zero(); m * n];
        gemm(va.data(), ar, ac, ta, vb.data(), br, bc, tb, &mut out, false);
        let value = Tensor::new([m, n], out)?;
        Ok(self.push(value, Op::MatMul { a, b, ta, tb }, &[a, b]))
    }

    fn zip(&mut self, name: &'static str, a: NodeId, b: NodeId, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch(name, va, vb));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(value, op, &[a, b]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a length-`d` vector to every row of an `n×d` matrix.
    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (vx, vb) = (self.value(x), self.value(bias));
        let (_, d) = vx.dims2("add_row")?;
        if vb.numel() != d {
            return Err(mismatch("add_row", vx, vb));
        }
        let data = vx.data().iter().enumerate().map(|(i, &v)| v + vb.data()[i % d]).collect();
        let value = Tensor::new(vx.shape().to_vec(), data)?;
        Ok(self.push(value, Op::AddRow { x, bias }, &[x, bias]))
    }

    pub fn scale(&mut self, x: NodeId, c: T) -> NodeId {
        let value = self.value(x).scale(c);
        self.push(value, Op::Scale { x, c }, &[x])
    }

    fn map(&mut self, x: NodeId, f: impl Fn(T) -> T, op: Op<T>) -> NodeId {
        let vx = self.value(x);
        let value = Tensor::new(vx.shape().to_vec(), vx.data().iter().map(|&v| f(v)).collect()).expect("same shape");
        self.push(value, op, &[x])
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        self.map(x, kernels::gelu, Op::Gelu(x))
    }

    /// `ln(1 + e^x)`; `softplus(−z) = −log σ(z)`.
    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        self.map(x, kernels::softplus, Op::Softplus(x))
    }

    pub fn softmax(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let value = self.value(x).softmax(axis)?;
        Ok(self.push(value, Op::Softmax { x, axis }, &[x]))
    }

    /// Normalizes each row (last axis) to zero mean and unit variance, then
    /// applies `gain` and `bias`. `eps` is added to the variance.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId, eps: T) -> Result<NodeId> {
        let vx = self.value(x);
        let d = *vx.shape().last().expect("non-empty shape");
        for p in [gain, bias] {
            if self.value(p).numel() != d {
                return Err(mismatch("layer_norm", vx, self.value(p)));
            }
        }
        let (out, xhat, rstd) =
            kernels::layer_norm(vx.data(), self.value(gain).data(), self.value(bias).data(), d, eps);
        let value = Tensor::new(vx.shape().to_vec(), out)?;
        Ok(self.push(value, Op::LayerNorm { x, gain, bias, xhat, rstd }, &[x, gain, bias]))
    }

    /// Gathers rows of a `V×d` table.
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let vt = self.value(table);
        let (v, d) = vt.dims2("embedding")?;
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(TensorError::Index { op: "embedding", index: id, extent: v });
            }
            out.extend_from_slice(&vt.data()[id * d..(id + 1) * d]);
        }
        let value = Tensor::new([ids.len(), d], out)?;
        Ok(self.push(value, Op::Embedding { table, ids: ids.to_vec() }, &[table]))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let vx = self.value(x);
        let (n, d) = vx.dims2("slice_cols")?;
        if len == 0 || start + len > d {
            return Err(TensorError::Index { op: "slice_cols", index: start + len, extent: d });
        }
        let mut out = Vec::with_capacity(n * len);
        for r in 0..n {
            out.extend_from_slice(&vx.data()[r * d + start..r * d + start + len]);
        }
        let value = Tensor::new([n, len], out)?;
        Ok(self.push(value, Op::SliceCols { x, start }, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = self.value(parts[0]);
        let (n, _) = first.dims2("concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let vp = self.value(p);
            let (rows, w) = vp.dims2("concat_cols")?;
            if rows != n {
                return Err(mismatch("concat_cols", first, vp));
            }
            widths.push(w);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total);
        for r in 0..n {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let value = Tensor::new([n, total], out)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.value(x).transpose()?;
        Ok(self.push(value, Op::Transpose(x), &[x]))
    }

    /// Sets entries above the diagonal of a square score matrix to −∞.
    pub fn causal_mask(&mut self, x: NodeId) -> Result<NodeId> {
        let vx = self.value(x);
        let (n, m) = vx.dims2("causal_mask")?;
        if n != m {
            return Err(mismatch("causal_mask", vx, vx));
        }
        let mut data = vx.data().to_vec();
        for i in 0..n {
            for v in &mut data[i * n + i + 1..(i + 1) * n] {
                *v = T::neg_infinity();
            }
        }
        let value = Tensor::new([n, n], data)?;
        Ok(self.push(value, Op::CausalMask(x), &[x]))
    }

    /// Negative log-likelihood of `targets` under `softmax(logits)` row-wise,
    /// over the rows selected by `mask` (all rows when `None`).
    ///
    /// With [`Reduction::Sum`] this is exactly `−Σ_{i∈M} log p_i(target_i)`;
    /// [`Reduction::Mean`] divides by `|M|`. Targets at unselected rows are
    /// ignored and need not be valid ids.
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        targets: &[usize],
        mask: Option<&[bool]>,
        reduction: Reduction,
    ) -> Result<NodeId> {
        let vl = self.value(logits);
        let (n, v) = vl.dims2("cross_entropy")?;
        let selected: Vec<bool> = match mask {
            Some(m) => m.to_vec(),
            None => vec![true; n],
        };
        if targets.len() != n || selected.len() != n {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: vl.shape().to_vec(),
                rhs: vec![targets.len(), selected.len()],
            });
        }
        let count = selected.iter().filter(|&&s| s).count();
        if count == 0 {
            return Err(TensorError::EmptySelection);
        }
        let mut probs = vec![T::zero(); n * v];
        let mut total = T::zero();
        for r in 0..n {
            if !selected[r] {
                continue;
            }
            if targets[r] >= v {
                return Err(TensorError::Index { op: "cross_entropy", index: targets[r], extent: v });
            }
            let logp = kernels::log_softmax_row(&vl.data()[r * v..(r + 1) * v]);
            total = total - logp[targets[r]];
            for (p, lp) in probs[r * v..(r + 1) * v].iter_mut().zip(&logp) {
                *p = lp.exp();
            }
        }
        let scale = match reduction {
            Reduction::Sum => T::one(),
            Reduction::Mean => T::from_usize(count).expect("count fits float").recip(),
        };
        let value = Tensor::scalar(total * scale);
        Ok(self.push(value, Op::CrossEntropy { logits, targets: targets.to_vec(), selected, probs, scale }, &[logits]))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(x).data().iter().copied().sum());
        self.push(value, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let vx = self.value(x);
        let n = T::from_usize(vx.numel()).expect("count fits float");
        let value = Tensor::scalar(vx.data().iter().copied().sum::<T>() / n);
        self.push(value, Op::Mean(x), &[x])
    }

    /// Gradient of the last backward's loss with respect to `id`. `None` when
    /// backward has not run or `id` is not on a differentiable path to the loss.
    pub fn grad(&self, id: NodeId) -> Option<Tensor<T>> {
        let g = self.grads.get(id.0)?.as_ref()?;
        Some(Tensor::new(self.value(id).shape().to_vec(), g.clone()).expect("grad mirrors value"))
    }

    /// Reverse-mode sweep from a scalar `loss`. May run once per graph.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.consumed {
            return Err(TensorError::GraphConsumed);
        }
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(TensorError::NotScalar(lv.shape().to_vec()));
        }
        self.consumed = true;
        let nodes = &self.nodes;
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        if nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            backprop(nodes, i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }
}

/// Returns the gradient buffer for `id`, creating it zeroed on first touch,
/// or `None` when `id` does not require a gradient.
fn slot<'a, T: Element>(nodes: &[Node<T>], grads: &'a mut [Option<Vec<T>>], id: NodeId) -> Option<&'a mut Vec<T>> {
    let node = &nodes[id.0];
    if !node.requires_grad {
        return None;
    }
    Some(grads[id.0].get_or_insert_with(|| vec![T::zero(); node.value.numel()]))
}

fn backprop<T: Element>(nodes: &[Node<T>], i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
    let node = &nodes[i];
    match &node.op {
        Op::Leaf => {}
        &Op::MatMul { a, b, ta, tb } => {
            let (m, n) = node.value.dims2("matmul").expect("2-d");
            let va = &nodes[a.0].value;
            let vb = &nodes[b.0].value;
            let (ar, ac) = va.dims2("matmul").expect("2-d");
            let (br, bc) = vb.dims2("matmul").expect("2-d");
            if let Some(da) = slot(nodes, grads, a) {
                if ta {
                    gemm(vb.data(), br, bc, tb, g, m, n, true, da, true);
                } else {
                    gemm(g, m, n, false, vb.data(), br, bc, !tb, da, true);
                }
            }
            if let Some(db) = slot(nodes, grads, b) {
                if tb {
                    gemm(g, m, n, true, va.data(), ar, ac, ta, db, true);
                } else {
                    gemm(va.data(), ar, ac, !ta, g, m, n, false, db, true);
                }
            }
        }
        &Op::Add(a, b) => {
            for id in [a, b] {
                if let Some(d) = slot(nodes, grads, id) {
                    d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + g);
                }
            }
        }
        &Op::Sub(a, b) => {
            if let Some(d) = slot(nodes, grads, a) {
                d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + g);
            }
            if let Some(d) = slot(nodes, grads, b) {
                d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d - g);
            }
        }
        &Op::Mul(a, b) => {
            for (id, other) in [(a, b), (b, a)] {
                let vo = nodes[other.0].value.data();
                if let Some(d) = slot(nodes, grads, id) {
                    for ((d, &g), &o) in d.iter_mut().zip(g).zip(vo) {
                        *d = *d + g * o;
                    }
                }
            }
        }
        &Op::AddRow { x, bias } => {
            if let Some(d) = slot(nodes, grads, x) {
                d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + g);
            }
            if let Some(db) = slot(nodes, grads, bias) {
                let w = db.len();
                for (j, &gv) in g.iter().enumerate() {
                    db[j % w] = db[j % w] + gv;
                }
            }
        }
        &Op::Scale { x, c } => {
            if let Some(d) = slot(nodes, grads, x) {
                d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + c * g);
            }
        }
        &Op::Gelu(x) | &Op::Softplus(x) => {
            let deriv: fn(T) -> T = match node.op {
                Op::Gelu(_) => kernels::gelu_grad,
                _ => kernels::sigmoid,
            };
            let vx = nodes[x.0].value.data();
            if let Some(d) = slot(nodes, grads, x) {
                for ((d, &g), &v) in d.iter_mut().zip(g).zip(vx) {
                    *d = *d + g * deriv(v);
                }
            }
        }
        &Op::Softmax { x, axis } => {
            let (outer, len, inner) = kernels::axis_split(node.value.shape(), axis).expect("axis checked on record");
            if let Some(d) = slot(nodes, grads, x) {
                kernels::softmax_backward(node.value.data(), g, d, outer, len, inner);
            }
        }
        Op::LayerNorm { x, gain, bias, xhat, rstd } => {
            let d = nodes[gain.0].value.numel();
            let rows = xhat.len() / d;
            let gv = nodes[gain.0].value.data();
            if let Some(dg) = slot(nodes, grads, *gain) {
                for (j, (&gi, &h)) in g.iter().zip(xhat).enumerate() {
                    dg[j % d] = dg[j % d] + gi * h;
                }
            }
            if let Some(db) = slot(nodes, grads, *bias) {
                for (j, &gi) in g.iter().enumerate() {
                    db[j % d] = db[j % d] + gi;
                }
            }
            if let Some(dx) = slot(nodes, grads, *x) {
                let dt = T::from_usize(d).expect("extent fits float");
                for r in 0..rows {
                    let span = r * d..(r + 1) * d;
                    let dh: Vec<T> = g[span.clone()].iter().zip(gv).map(|(&a, &b)| a * b).collect();
                    let h = &xhat[span.clone()];
                    let mean_dh = dh.iter().copied().sum::<T>() / dt;
                    let mean_dh_h = dh.iter().zip(h).map(|(&a, &b)| a * b).sum::<T>() / dt;
                    for j in 0..d {
                        let v = rstd[r] * (dh[j] - mean_dh - h[j] * mean_dh_h);
                        dx[r * d + j] = dx[r * d + j] + v;
                    }
                }
            }
        }
        Op::Embedding { table, ids } => {
            let d = nodes[table.0].value.shape()[1];
            if let Some(dt) = slot(nodes, grads, *table) {
                for (r, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        dt[id * d + j] = dt[id * d + j] + g[r * d + j];
                    }
                }
            }
        }
        &Op::SliceCols { x, start } => {
            let (n, len) = node.value.dims2("slice_cols").expect("2-d");
            let d = nodes[x.0].value.shape()[1];
            if let Some(dx) = slot(nodes, grads, x) {
                for r in 0..n {
                    for j in 0..len {
                        dx[r * d + start + j] = dx[r * d + start + j] + g[r * len + j];
                    }
                }
            }
        }
        Op::ConcatCols(parts) => {
            let (n, total) = node.value.dims2("concat_cols").expect("2-d");
            let mut offset = 0;
            for &p in parts {
                let w = nodes[p.0].value.shape()[1];
                if let Some(dp) = slot(nodes, grads, p) {
                    for r in 0..n {
                        for j in 0..w {
                            dp[r * w + j] = dp[r * w + j] + g[r * total + offset + j];
                        }
                    }
                }
                offset += w;
            }
        }
        &Op::Transpose(x) => {
            let (r, c) = node.value.dims2("transpose").expect("2-d");
            let gt = kernels::transpose(g, r, c);
            if let Some(dx) = slot(nodes, grads, x) {
                dx.iter_mut().zip(&gt).for_each(|(d, &g)| *d = *d + g);
            }
        }
        &Op::CausalMask(x) => {
            let (n, _) = node.value.dims2("causal_mask").expect("2-d");
            if let Some(dx) = slot(nodes, grads, x) {
                for i in 0..n {
                    for j in 0..=i {
                        dx[i * n + j] = dx[i * n + j] + g[i * n + j];
                    }
                }
            }
        }
        Op::CrossEntropy { logits, targets, selected, probs, scale } => {
            let v = nodes[logits.0].value.shape()[1];
            let up = g[0] * *scale;
            if let Some(dl) = slot(nodes, grads, *logits) {
                for (r, (&sel, &t)) in selected.iter().zip(targets).enumerate() {
                    if !sel {
                        continue;
                    }
                    for c in 0..v {
                        let onehot = if c == t { T::one() } else { T::zero() };
                        dl[r * v + c] = dl[r * v + c] + up * (probs[r * v + c] - onehot);
                    }
                }
            }
        }
        &Op::Sum(x) => {
            if let Some(dx) = slot(nodes, grads, x) {
                dx.iter_mut().for_each(|d| *d = *d + g[0]);
            }
        }
        &Op::Mean(x) => {
            let n = T::from_usize(nodes[x.0].value.numel()).expect("count fits float");
            if let Some(dx) = slot(nodes, grads, x) {
                dx.iter_mut().for_each(|d| *d = *d + g[0] / n);
            }
        }
    }
}
