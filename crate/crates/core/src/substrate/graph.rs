//! Reverse-mode differentiation on a define-by-run tape. Values are computed
//! eagerly when an op is recorded; `backward` replays the tape in reverse and
//! accumulates exact gradients into every reachable leaf.
//!
//! A tape is single-owner: build, run backward once, read gradients, drop.

use super::kernels::{col_sums_acc, mm_acc, mm_at_acc};
use super::{NdArray, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<R: Real> {
    Leaf,
    Constant,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MinElem(Var, Var),
    Neg(Var),
    AddScalar(Var, R),
    MulScalar(Var, R),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Square(Var),
    SqrtEps(Var, R),
    Clamp(Var, R, R),
    /// x[m x k] @ w[k x n] (+ row-broadcast bias[n])
    Linear { x: Var, w: Var, b: Option<Var> },
    SumAll(Var),
    MeanAll(Var),
    /// [m x n] -> [m]: sum over columns per row
    SumCols(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize, usize),
    Conv2d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    PoolMax(Var),
    PoolAvg(Var),
}

struct Node<R: Real> {
    value: NdArray<R>,
    op: Op<R>,
    needs_grad: bool,
}

pub struct Graph<R: Real> {
    nodes: Vec<Node<R>>,
    grads: Vec<Option<NdArray<R>>>,
}

impl<R: Real> Default for Graph<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> Graph<R> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &NdArray<R> {
        &self.nodes[v.0].value
    }

    /// Gradient of the last backward() loss w.r.t. `v`. Zero array if the loss
    /// did not reach `v`.
    pub fn grad(&self, v: Var) -> NdArray<R> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => NdArray::zeros(self.nodes[v.0].value.shape()),
        }
    }

    fn push(&mut self, value: NdArray<R>, op: Op<R>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: NdArray<R>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable input; gradients never flow into it.
    pub fn constant(&mut self, value: NdArray<R>) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a.0].value.zip_map(&self.nodes[b.0].value, |x, y| x + y);
        let g = self.ng(a) || self.ng(b);
        self.push(v, Op::Add(a, b), g)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a.0].value.zip_map(&self.nodes[b.0].value, |x, y| x - y);
        let g = self.ng(a) || self.ng(b);
        self.push(v, Op::Sub(a, b), g)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a.0].value.zip_map(&self.nodes[b.0].value, |x, y| x * y);
        let g = self.ng(a) || self.ng(b);
        self.push(v, Op::Mul(a, b), g)
    }

    pub fn min_elem(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a.0].value.zip_map(&self.nodes[b.0].value, |x, y| x.min(y));
        let g = self.ng(a) || self.ng(b);
        self.push(v, Op::MinElem(a, b), g)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.map(|x| -x);
        let g = self.ng(a);
        self.push(v, Op::Neg(a), g)
    }

    pub fn add_scalar(&mut self, a: Var, c: R) -> Var {
        let v = self.nodes[a.0].value.map(|x| x + c);
        let g = self.ng(a);
        self.push(v, Op::AddScalar(a, c), g)
    }

    pub fn mul_scalar(&mut self, a: Var, c: R) -> Var {
        let v = self.nodes[a.0].value.map(|x| x * c);
        let g = self.ng(a);
        self.push(v, Op::MulScalar(a, c), g)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.map(|x| if x > R::zero() { x } else { R::zero() });
        let g = self.ng(a);
        self.push(v, Op::Relu(a), g)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.map(|x| x.tanh());
        let g = self.ng(a);
        self.push(v, Op::Tanh(a), g)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let one = R::one();
        let v = self.nodes[a.0].value.map(|x| one / (one + (-x).exp()));
        let g = self.ng(a);
        self.push(v, Op::Sigmoid(a), g)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.map(|x| x.exp());
        let g = self.ng(a);
        self.push(v, Op::Exp(a), g)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.map(|x| x.ln());
        let g = self.ng(a);
        self.push(v, Op::Ln(a), g)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.map(|x| x * x);
        let g = self.ng(a);
        self.push(v, Op::Square(a), g)
    }

    /// sqrt(x + eps); the offset keeps the derivative finite at x = 0.
    pub fn sqrt_eps(&mut self, a: Var, eps: R) -> Var {
        let v = self.nodes[a.0].value.map(|x| (x + eps).sqrt());
        let g = self.ng(a);
        self.push(v, Op::SqrtEps(a, eps), g)
    }

    /// Hard clamp; gradient passes only where the input is inside [lo, hi].
    pub fn clamp(&mut self, a: Var, lo: R, hi: R) -> Var {
        let v = self.nodes[a.0].value.map(|x| x.max(lo).min(hi));
        let g = self.ng(a);
        self.push(v, Op::Clamp(a, lo, hi), g)
    }

    /// x[m x k] @ w[k x n] + bias[n] broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let xv = &self.nodes[x.0].value;
        let wv = &self.nodes[w.0].value;
        let (m, k) = (xv.rows(), xv.cols());
        assert_eq!(wv.shape().len(), 2, "linear: weight must be 2-d");
        assert_eq!(wv.shape()[0], k, "linear: inner dims {} vs {:?}", k, wv.shape());
        let n = wv.shape()[1];
        let mut out = NdArray::zeros(&[m, n]);
        mm_acc(xv.data(), wv.data(), out.data_mut(), m, k, n);
        if let Some(bias) = b {
            let bv = &self.nodes[bias.0].value;
            assert_eq!(bv.len(), n, "linear: bias length");
            for i in 0..m {
                for (o, &bb) in out.row_mut(i).iter_mut().zip(bv.data()) {
                    *o += bb;
                }
            }
        }
        let g = self.ng(x) || self.ng(w) || b.map(|bb| self.ng(bb)).unwrap_or(false);
        self.push(out, Op::Linear { x, w, b }, g)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = NdArray::scalar(self.nodes[a.0].value.sum());
        let g = self.ng(a);
        self.push(v, Op::SumAll(a), g)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = R::of(self.nodes[a.0].value.len() as f64);
        let v = NdArray::scalar(self.nodes[a.0].value.sum() / n);
        let g = self.ng(a);
        self.push(v, Op::MeanAll(a), g)
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let (m, n) = (av.rows(), av.cols());
        let mut out = NdArray::zeros(&[m]);
        for i in 0..m {
            let mut s = R::zero();
            for &x in av.row(i) {
                s += x;
            }
            out.data_mut()[i] = s;
        }
        let _ = n;
        let g = self.ng(a);
        self.push(out, Op::SumCols(a), g)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let m = av.rows();
        assert_eq!(m, bv.rows(), "concat_cols: row mismatch");
        let (p, q) = (av.cols(), bv.cols());
        let mut out = NdArray::zeros(&[m, p + q]);
        for i in 0..m {
            out.row_mut(i)[..p].copy_from_slice(av.row(i));
            out.row_mut(i)[p..].copy_from_slice(bv.row(i));
        }
        let g = self.ng(a) || self.ng(b);
        self.push(out, Op::ConcatCols(a, b), g)
    }

    pub fn slice_cols(&mut self, a: Var, lo: usize, hi: usize) -> Var {
        let av = &self.nodes[a.0].value;
        let m = av.rows();
        assert!(lo < hi && hi <= av.cols(), "slice_cols out of range");
        let mut out = NdArray::zeros(&[m, hi - lo]);
        for i in 0..m {
            out.row_mut(i).copy_from_slice(&av.row(i)[lo..hi]);
        }
        let g = self.ng(a);
        self.push(out, Op::SliceCols(a, lo, hi), g)
    }

    /// Cross-correlation of x[C_in x H x W] with w[C_out x C_in x kh x kw].
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let xv = &self.nodes[x.0].value;
        let wv = &self.nodes[w.0].value;
        let bv = &self.nodes[b.0].value;
        let out = conv2d_raw(xv, wv, bv, stride, pad);
        let g = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(out, Op::Conv2d { x, w, b, stride, pad }, g)
    }

    /// Per-channel max over the spatial extent of [C x H x W].
    pub fn pool_max(&mut self, a: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let (c, hw) = chan_split(av);
        let mut out = NdArray::zeros(&[c]);
        for ch in 0..c {
            let s = &av.data()[ch * hw..(ch + 1) * hw];
            let mut best = s[0];
            for &v in &s[1..] {
                if v > best {
                    best = v;
                }
            }
            out.data_mut()[ch] = best;
        }
        let g = self.ng(a);
        self.push(out, Op::PoolMax(a), g)
    }

    /// Per-channel mean over the spatial extent of [C x H x W].
    pub fn pool_avg(&mut self, a: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let (c, hw) = chan_split(av);
        let inv = R::one() / R::of(hw as f64);
        let mut out = NdArray::zeros(&[c]);
        for ch in 0..c {
            let mut s = R::zero();
            for &v in &av.data()[ch * hw..(ch + 1) * hw] {
                s += v;
            }
            out.data_mut()[ch] = s * inv;
        }
        let g = self.ng(a);
        self.push(out, Op::PoolAvg(a), g)
    }

    /// Reverse pass from a scalar loss. Gradients are then readable per Var.
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.nodes[loss.0].value.len(), 1, "backward needs a scalar loss");
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(NdArray::full(self.nodes[loss.0].value.shape(), R::one()));

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            let Some(g) = self.grads[id].take() else { continue };
            self.propagate(id, &g);
            self.grads[id] = Some(g);
        }
    }

    fn acc_grad(&mut self, v: Var, delta: NdArray<R>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(g) => g.add_in_place(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&mut self, id: usize, g: &NdArray<R>) {
        // Ops only reference earlier nodes, so reading values while pushing
        // gradients to parents is safe.
        match self.nodes[id].op {
            Op::Leaf | Op::Constant => {}
            Op::Add(a, b) => {
                self.acc_grad(a, g.clone());
                self.acc_grad(b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc_grad(a, g.clone());
                self.acc_grad(b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.ng(a) {
                    let d = g.zip_map(&self.nodes[b.0].value, |gv, bv| gv * bv);
                    self.acc_grad(a, d);
                }
                if self.ng(b) {
                    let d = g.zip_map(&self.nodes[a.0].value, |gv, av| gv * av);
                    self.acc_grad(b, d);
                }
            }
            Op::MinElem(a, b) => {
                // Ties route to the first operand.
                let av = self.nodes[a.0].value.clone();
                let bv = self.nodes[b.0].value.clone();
                if self.ng(a) {
                    let d = NdArray::from_fn(g.shape(), |i| {
                        if av.data()[i] <= bv.data()[i] { g.data()[i] } else { R::zero() }
                    });
                    self.acc_grad(a, d);
                }
                if self.ng(b) {
                    let d = NdArray::from_fn(g.shape(), |i| {
                        if av.data()[i] <= bv.data()[i] { R::zero() } else { g.data()[i] }
                    });
                    self.acc_grad(b, d);
                }
            }
            Op::Neg(a) => self.acc_grad(a, g.map(|x| -x)),
            Op::AddScalar(a, _) => self.acc_grad(a, g.clone()),
            Op::MulScalar(a, c) => self.acc_grad(a, g.map(|x| x * c)),
            Op::Relu(a) => {
                let d = g.zip_map(&self.nodes[a.0].value, |gv, x| {
                    if x > R::zero() { gv } else { R::zero() }
                });
                self.acc_grad(a, d);
            }
            Op::Tanh(a) => {
                let d = g.zip_map(&self.nodes[id].value, |gv, y| gv * (R::one() - y * y));
                self.acc_grad(a, d);
            }
            Op::Sigmoid(a) => {
                let d = g.zip_map(&self.nodes[id].value, |gv, y| gv * y * (R::one() - y));
                self.acc_grad(a, d);
            }
            Op::Exp(a) => {
                let d = g.zip_map(&self.nodes[id].value, |gv, y| gv * y);
                self.acc_grad(a, d);
            }
            Op::Ln(a) => {
                let d = g.zip_map(&self.nodes[a.0].value, |gv, x| gv / x);
                self.acc_grad(a, d);
            }
            Op::Square(a) => {
                let two = R::of(2.0);
                let d = g.zip_map(&self.nodes[a.0].value, |gv, x| gv * two * x);
                self.acc_grad(a, d);
            }
            Op::SqrtEps(a, _) => {
                let half = R::of(0.5);
                let d = g.zip_map(&self.nodes[id].value, |gv, y| gv * half / y);
                self.acc_grad(a, d);
            }
            Op::Clamp(a, lo, hi) => {
                let d = g.zip_map(&self.nodes[a.0].value, |gv, x| {
                    if x >= lo && x <= hi { gv } else { R::zero() }
                });
                self.acc_grad(a, d);
            }
            Op::Linear { x, w, b } => {
                let xv = self.nodes[x.0].value.clone();
                let wv = self.nodes[w.0].value.clone();
                let (m, k) = (xv.rows(), xv.cols());
                let n = wv.shape()[1];
                if self.ng(x) {
                    let wt = wv.transpose2();
                    let mut dx = NdArray::zeros(&[m, k]);
                    mm_acc(g.data(), wt.data(), dx.data_mut(), m, n, k);
                    self.acc_grad(x, dx);
                }
                if self.ng(w) {
                    let mut dw = NdArray::zeros(&[k, n]);
                    mm_at_acc(xv.data(), g.data(), dw.data_mut(), m, k, n);
                    self.acc_grad(w, dw);
                }
                if let Some(bias) = b {
                    if self.ng(bias) {
                        let mut db = NdArray::zeros(&[n]);
                        col_sums_acc(g.data(), m, n, db.data_mut());
                        self.acc_grad(bias, db);
                    }
                }
            }
            Op::SumAll(a) => {
                let gv = g.item();
                self.acc_grad(a, NdArray::full(self.nodes[a.0].value.shape(), gv));
            }
            Op::MeanAll(a) => {
                let n = R::of(self.nodes[a.0].value.len() as f64);
                let gv = g.item() / n;
                self.acc_grad(a, NdArray::full(self.nodes[a.0].value.shape(), gv));
            }
            Op::SumCols(a) => {
                let shape = self.nodes[a.0].value.shape().to_vec();
                let cols = self.nodes[a.0].value.cols();
                let mut d = NdArray::zeros(&shape);
                for i in 0..g.len() {
                    let gv = g.data()[i];
                    for x in d.row_mut(i) {
                        *x = gv;
                    }
                }
                let _ = cols;
                self.acc_grad(a, d);
            }
            Op::ConcatCols(a, b) => {
                let p = self.nodes[a.0].value.cols();
                let m = g.rows();
                let q = g.cols() - p;
                if self.ng(a) {
                    let mut da = NdArray::zeros(&[m, p]);
                    for i in 0..m {
                        da.row_mut(i).copy_from_slice(&g.row(i)[..p]);
                    }
                    self.acc_grad(a, da);
                }
                if self.ng(b) {
                    let mut db = NdArray::zeros(&[m, q]);
                    for i in 0..m {
                        db.row_mut(i).copy_from_slice(&g.row(i)[p..]);
                    }
                    self.acc_grad(b, db);
                }
            }
            Op::SliceCols(a, lo, _hi) => {
                let shape = self.nodes[a.0].value.shape().to_vec();
                let mut d = NdArray::zeros(&shape);
                for i in 0..g.rows() {
                    let gr = g.row(i);
                    d.row_mut(i)[lo..lo + gr.len()].copy_from_slice(gr);
                }
                self.acc_grad(a, d);
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                let xv = self.nodes[x.0].value.clone();
                let wv = self.nodes[w.0].value.clone();
                let (dx, dw, db) = conv2d_backward(&xv, &wv, g, stride, pad, self.ng(x), self.ng(w));
                if self.ng(x) {
                    self.acc_grad(x, dx);
                }
                if self.ng(w) {
                    self.acc_grad(w, dw);
                }
                if self.ng(b) {
                    self.acc_grad(b, db);
                }
            }
            Op::PoolMax(a) => {
                let av = self.nodes[a.0].value.clone();
                let (c, hw) = chan_split(&av);
                let mut d = NdArray::zeros(av.shape());
                for ch in 0..c {
                    let s = &av.data()[ch * hw..(ch + 1) * hw];
                    let mut best = 0usize;
                    for (i, &v) in s.iter().enumerate() {
                        if v > s[best] {
                            best = i;
                        }
                    }
                    d.data_mut()[ch * hw + best] = g.data()[ch];
                }
                self.acc_grad(a, d);
            }
            Op::PoolAvg(a) => {
                let shape = self.nodes[a.0].value.shape().to_vec();
                let (c, hw) = chan_split(&self.nodes[a.0].value);
                let inv = R::one() / R::of(hw as f64);
                let mut d = NdArray::zeros(&shape);
                for ch in 0..c {
                    let gv = g.data()[ch] * inv;
                    for v in &mut d.data_mut()[ch * hw..(ch + 1) * hw] {
                        *v = gv;
                    }
                }
                self.acc_grad(a, d);
            }
        }
    }
}

fn chan_split<R: Real>(a: &NdArray<R>) -> (usize, usize) {
    assert_eq!(a.shape().len(), 3, "pooling expects [C x H x W]");
    let c = a.shape()[0];
    let hw = a.shape()[1] * a.shape()[2];
    assert!(hw > 0, "pooling over empty spatial extent");
    (c, hw)
}

pub(super) fn conv2d_raw<R: Real>(
    x: &NdArray<R>,
    w: &NdArray<R>,
    b: &NdArray<R>,
    stride: usize,
    pad: usize,
) -> NdArray<R> {
    let (c_in, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (c_out, kc, kh, kw) =
        (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    assert_eq!(kc, c_in, "conv2d: channel mismatch");
    assert!(stride >= 1, "conv2d: stride must be >= 1");
    assert!(kh <= h + 2 * pad && kw <= wd + 2 * pad, "conv2d: kernel larger than padded input");
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = NdArray::zeros(&[c_out, oh, ow]);
    for co in 0..c_out {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = b.data()[co];
                for ci in 0..c_in {
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            s += x.data()[(ci * h + iy as usize) * wd + ix as usize]
                                * w.data()[((co * c_in + ci) * kh + ky) * kw + kx];
                        }
                    }
                }
                out.data_mut()[(co * oh + oy) * ow + ox] = s;
            }
        }
    }
    out
}

fn conv2d_backward<R: Real>(
    x: &NdArray<R>,
    w: &NdArray<R>,
    g: &NdArray<R>,
    stride: usize,
    pad: usize,
    want_dx: bool,
    want_dw: bool,
) -> (NdArray<R>, NdArray<R>, NdArray<R>) {
    let (c_in, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (c_out, _, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    let (oh, ow) = (g.shape()[1], g.shape()[2]);
    let mut dx = NdArray::zeros(x.shape());
    let mut dw = NdArray::zeros(w.shape());
    let mut db = NdArray::zeros(&[c_out]);
    for co in 0..c_out {
        let mut bsum = R::zero();
        for oy in 0..oh {
            for ox in 0..ow {
                let gv = g.data()[(co * oh + oy) * ow + ox];
                bsum += gv;
                for ci in 0..c_in {
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            let xi = (ci * h + iy as usize) * wd + ix as usize;
                            let wi = ((co * c_in + ci) * kh + ky) * kw + kx;
                            if want_dw {
                                dw.data_mut()[wi] += gv * x.data()[xi];
                            }
                            if want_dx {
                                dx.data_mut()[xi] += gv * w.data()[wi];
                            }
                        }
                    }
                }
            }
        }
        db.data_mut()[co] = bsum;
    }
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_rule_through_elementwise() {
        // d/dx mean(tanh(x)^2) = 2 tanh(x) (1 - tanh(x)^2) / n
        let mut g = Graph::<f64>::new();
        let x = g.leaf(NdArray::from_vec(&[3], vec![0.3, -0.7, 1.1]).unwrap());
        let t = g.tanh(x);
        let s = g.square(t);
        let loss = g.mean_all(s);
        g.backward(loss);
        let dx = g.grad(x);
        for (i, &xv) in [0.3f64, -0.7, 1.1].iter().enumerate() {
            let th = xv.tanh();
            let expect = 2.0 * th * (1.0 - th * th) / 3.0;
            assert!((dx.data()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_gradients_match_manual() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(NdArray::from_vec(&[2, 3], vec![1.0, 2.0, -1.0, 0.5, -0.5, 2.0]).unwrap());
        let w = g.leaf(NdArray::from_vec(&[3, 2], vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6]).unwrap());
        let b = g.leaf(NdArray::from_vec(&[2], vec![0.05, -0.05]).unwrap());
        let y = g.linear(x, w, Some(b));
        let loss = g.sum_all(y);
        g.backward(loss);
        // d loss / d b = column sums of ones = rows
        assert_eq!(g.grad(b).data(), &[2.0, 2.0]);
        // d loss / d w[k][n] = sum_i x[i][k]
        let dw = g.grad(w);
        assert!((dw.at2(0, 0) - 1.5).abs() < 1e-12);
        assert!((dw.at2(2, 1) - 1.0).abs() < 1e-12);
        // d loss / d x[i][k] = sum_n w[k][n]
        let dx = g.grad(x);
        assert!((dx.at2(0, 0) - (-0.1)).abs() < 1e-12);
        assert!((dx.at2(1, 2) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn grad_stops_at_constants() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(NdArray::from_vec(&[2], vec![1.0, 2.0]).unwrap());
        let c = g.constant(NdArray::from_vec(&[2], vec![3.0, 4.0]).unwrap());
        let y = g.mul(a, c);
        let loss = g.sum_all(y);
        g.backward(loss);
        assert_eq!(g.grad(a).data(), &[3.0, 4.0]);
        assert_eq!(g.grad(c).data(), &[0.0, 0.0]);
    }
}
