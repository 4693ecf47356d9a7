use super::graph::conv2d_raw;
use super::kernels::mm_acc;
use super::{Graph, NdArray, Real, Var};
use crate::{DriveError, Result};

/// Bounds applied to predicted log standard deviations before sampling.
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Numerical floor inside the tanh change-of-variables logarithm.
pub const TANH_CORRECTION_EPS: f64 = 1e-6;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_74; // 0.5 * ln(2*pi)

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Avg,
}

/// y = act(W x + b) for a single vector, W stored as [n_out x n_in].
pub fn dense_forward<R: Real>(
    x: &NdArray<R>,
    w: &NdArray<R>,
    b: &NdArray<R>,
    act: Activation,
) -> Result<NdArray<R>> {
    if w.shape().len() != 2 {
        return Err(DriveError::contract("dense_forward: W must be 2-d"));
    }
    let (n_out, n_in) = (w.shape()[0], w.shape()[1]);
    if x.len() != n_in || b.len() != n_out {
        return Err(DriveError::contract(format!(
            "dense_forward: shapes W{:?} x[{}] b[{}] do not conform",
            w.shape(),
            x.len(),
            b.len()
        )));
    }
    let mut y = NdArray::zeros(&[n_out]);
    // y = W x: one dot per output row; W rows are contiguous.
    for o in 0..n_out {
        let mut s = b.data()[o];
        for (wv, xv) in w.row(o).iter().zip(x.data()) {
            s += *wv * *xv;
        }
        y.data_mut()[o] = s;
    }
    Ok(apply_activation(y, act))
}

fn apply_activation<R: Real>(y: NdArray<R>, act: Activation) -> NdArray<R> {
    match act {
        Activation::None => y,
        Activation::Relu => y.map(|v| if v > R::zero() { v } else { R::zero() }),
        Activation::Tanh => y.map(|v| v.tanh()),
    }
}

/// LSTM cell parameters. Gate order along the 4H axis is [i, f, g, o];
/// `w_x` is [n_in x 4H], `w_h` is [H x 4H].
#[derive(Clone, Debug)]
pub struct LstmParams<R> {
    pub w_x: NdArray<R>,
    pub w_h: NdArray<R>,
    pub bias: NdArray<R>,
}

impl<R: Real> LstmParams<R> {
    pub fn zeros(n_in: usize, hidden: usize) -> Self {
        LstmParams {
            w_x: NdArray::zeros(&[n_in, 4 * hidden]),
            w_h: NdArray::zeros(&[hidden, 4 * hidden]),
            bias: NdArray::zeros(&[4 * hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.shape()[0]
    }
}

/// One LSTM step over a batch: x[b x n_in], h/c[b x H] -> (h', c').
pub fn lstm_step<R: Real>(
    x: &NdArray<R>,
    h: &NdArray<R>,
    c: &NdArray<R>,
    p: &LstmParams<R>,
) -> Result<(NdArray<R>, NdArray<R>)> {
    let hid = p.hidden();
    if h.cols() != hid || c.cols() != hid || h.rows() != x.rows() || c.rows() != x.rows() {
        return Err(DriveError::contract(format!(
            "lstm_step: hidden widths do not conform (h[{}x{}], c[{}x{}], H={})",
            h.rows(),
            h.cols(),
            c.rows(),
            c.cols(),
            hid
        )));
    }
    if x.cols() != p.w_x.shape()[0] {
        return Err(DriveError::contract("lstm_step: input width mismatch"));
    }
    let b = x.rows();
    let mut pre = NdArray::zeros(&[b, 4 * hid]);
    for i in 0..b {
        pre.row_mut(i).copy_from_slice(p.bias.data());
    }
    mm_acc(x.data(), p.w_x.data(), pre.data_mut(), b, x.cols(), 4 * hid);
    mm_acc(h.data(), p.w_h.data(), pre.data_mut(), b, hid, 4 * hid);

    let mut h_next = NdArray::zeros(&[b, hid]);
    let mut c_next = NdArray::zeros(&[b, hid]);
    let one = R::one();
    for r in 0..b {
        for j in 0..hid {
            let i_g = one / (one + (-pre.at2(r, j)).exp());
            let f_g = one / (one + (-pre.at2(r, hid + j)).exp());
            let g_g = pre.at2(r, 2 * hid + j).tanh();
            let o_g = one / (one + (-pre.at2(r, 3 * hid + j)).exp());
            let cn = f_g * c.at2(r, j) + i_g * g_g;
            c_next.set2(r, j, cn);
            h_next.set2(r, j, o_g * cn.tanh());
        }
    }
    Ok((h_next, c_next))
}

/// Tape variables for one LSTM cell.
#[derive(Clone, Copy)]
pub struct LstmVars {
    pub w_x: Var,
    pub w_h: Var,
    pub bias: Var,
}

/// Differentiable LSTM step built from primitive tape ops.
pub fn lstm_step_graph<R: Real>(
    g: &mut Graph<R>,
    x: Var,
    h: Var,
    c: Var,
    p: LstmVars,
    hidden: usize,
) -> (Var, Var) {
    let xw = g.linear(x, p.w_x, Some(p.bias));
    let hw = g.linear(h, p.w_h, None);
    let pre = g.add(xw, hw);
    let i_pre = g.slice_cols(pre, 0, hidden);
    let f_pre = g.slice_cols(pre, hidden, 2 * hidden);
    let g_pre = g.slice_cols(pre, 2 * hidden, 3 * hidden);
    let o_pre = g.slice_cols(pre, 3 * hidden, 4 * hidden);
    let i_g = g.sigmoid(i_pre);
    let f_g = g.sigmoid(f_pre);
    let g_g = g.tanh(g_pre);
    let o_g = g.sigmoid(o_pre);
    let fc = g.mul(f_g, c);
    let ig = g.mul(i_g, g_g);
    let c_next = g.add(fc, ig);
    let ct = g.tanh(c_next);
    let h_next = g.mul(o_g, ct);
    (h_next, c_next)
}

/// Cross-correlation with explicit stride/padding; spec-level wrapper around
/// the tape kernel with contract checks.
pub fn conv2d_forward<R: Real>(
    x: &NdArray<R>,
    w: &NdArray<R>,
    b: &NdArray<R>,
    stride: usize,
    pad: usize,
) -> Result<NdArray<R>> {
    if x.shape().len() != 3 || w.shape().len() != 4 {
        return Err(DriveError::contract("conv2d_forward: x must be 3-d, w 4-d"));
    }
    if stride == 0 {
        return Err(DriveError::contract("conv2d_forward: stride must be positive"));
    }
    if w.shape()[1] != x.shape()[0] {
        return Err(DriveError::contract("conv2d_forward: input channel mismatch"));
    }
    if w.shape()[2] > x.shape()[1] + 2 * pad || w.shape()[3] > x.shape()[2] + 2 * pad {
        return Err(DriveError::contract("conv2d_forward: kernel exceeds padded input"));
    }
    if b.len() != w.shape()[0] {
        return Err(DriveError::contract("conv2d_forward: bias length mismatch"));
    }
    Ok(conv2d_raw(x, w, b, stride, pad))
}

/// Per-channel max or mean over the spatial extent of [C x H x W].
pub fn global_pool<R: Real>(v: &NdArray<R>, mode: PoolMode) -> Result<NdArray<R>> {
    if v.shape().len() != 3 {
        return Err(DriveError::contract("global_pool: expects [C x H x W]"));
    }
    let (c, hw) = (v.shape()[0], v.shape()[1] * v.shape()[2]);
    if hw == 0 {
        return Err(DriveError::contract("global_pool: empty spatial extent"));
    }
    let mut out = NdArray::zeros(&[c]);
    for ch in 0..c {
        let s = &v.data()[ch * hw..(ch + 1) * hw];
        out.data_mut()[ch] = match mode {
            PoolMode::Max => {
                let mut best = s[0];
                for &x in &s[1..] {
                    if x > best {
                        best = x;
                    }
                }
                best
            }
            PoolMode::Avg => {
                let mut sum = R::zero();
                for &x in s {
                    sum += x;
                }
                sum / R::of(hw as f64)
            }
        };
    }
    Ok(out)
}

/// Squashed-Gaussian sample and its log-density for one vector of dimensions.
///
/// u = mean + exp(log_std) * noise, action = tanh(u); the log-density is the
/// Gaussian term minus the tanh change-of-variables correction
/// sum log(1 - tanh(u)^2 + eps). log_std is clamped to [-20, 2] first.
pub fn tanh_gaussian<R: Real>(
    mean: &NdArray<R>,
    log_std: &NdArray<R>,
    noise: &NdArray<R>,
) -> (NdArray<R>, R) {
    assert_eq!(mean.len(), log_std.len());
    assert_eq!(mean.len(), noise.len());
    let lo = R::of(LOG_STD_MIN);
    let hi = R::of(LOG_STD_MAX);
    let eps = R::of(TANH_CORRECTION_EPS);
    let half = R::of(0.5);
    let lnc = R::of(LN_SQRT_2PI);
    let one = R::one();
    let mut action = NdArray::zeros(mean.shape());
    let mut logp = R::zero();
    for i in 0..mean.len() {
        let ls = log_std.data()[i].max(lo).min(hi);
        let n = noise.data()[i];
        let u = mean.data()[i] + ls.exp() * n;
        let a = u.tanh();
        action.data_mut()[i] = a;
        logp += -half * n * n - ls - lnc - (one - a * a + eps).ln();
    }
    (action, logp)
}

/// Tape version over a batch: mean/log_std/noise are [b x k]; returns the
/// squashed action [b x k] and per-row log-density [b]. `noise` enters as a
/// constant, so gradients flow through the reparameterized path only.
pub fn tanh_gaussian_graph<R: Real>(
    g: &mut Graph<R>,
    mean: Var,
    log_std: Var,
    noise: &NdArray<R>,
) -> (Var, Var) {
    let eps = R::of(TANH_CORRECTION_EPS);
    let ls = g.clamp(log_std, R::of(LOG_STD_MIN), R::of(LOG_STD_MAX));
    let noise_c = g.constant(noise.clone());
    let std = g.exp(ls);
    let scaled = g.mul(std, noise_c);
    let u = g.add(mean, scaled);
    let action = g.tanh(u);

    // per-element: -0.5 n^2 - log_std - ln(sqrt(2 pi)) - ln(1 - a^2 + eps)
    let gauss_const = noise.map(|n| -R::of(0.5) * n * n - R::of(LN_SQRT_2PI));
    let gauss_const = g.constant(gauss_const);
    let neg_ls = g.neg(ls);
    let a2 = g.square(action);
    let neg_a2 = g.neg(a2);
    let inner = g.add_scalar(neg_a2, R::one() + eps);
    let corr = g.ln(inner);
    let t1 = g.add(gauss_const, neg_ls);
    let t2 = g.sub(t1, corr);
    let logp_rows = g.sum_cols(t2);
    (action, logp_rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arr(v: &[f64]) -> NdArray<f64> {
        NdArray::from_vec(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn dense_identity_and_relu() {
        let w = NdArray::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = arr(&[0.0, 0.0]);
        let x = arr(&[3.0, -1.0]);
        let y = dense_forward(&x, &w, &b, Activation::None).unwrap();
        assert_eq!(y.data(), &[3.0, -1.0]);
        let y = dense_forward(&x, &w, &b, Activation::Relu).unwrap();
        assert_eq!(y.data(), &[3.0, 0.0]);
    }

    #[test]
    fn dense_shape_mismatch_is_contract_error() {
        let w = NdArray::from_vec(&[2, 3], vec![0.0; 6]).unwrap();
        let b = arr(&[0.0, 0.0]);
        let x = arr(&[1.0, 2.0]);
        assert!(dense_forward(&x, &w, &b, Activation::None).is_err());
    }

    #[test]
    fn lstm_zero_params_zero_cell() {
        let p = LstmParams::<f64>::zeros(3, 2);
        let x = NdArray::from_vec(&[1, 3], vec![0.5, -2.0, 7.0]).unwrap();
        let h = NdArray::zeros(&[1, 2]);
        let c = NdArray::zeros(&[1, 2]);
        let (hn, cn) = lstm_step(&x, &h, &c, &p).unwrap();
        assert_eq!(hn.data(), &[0.0, 0.0]);
        assert_eq!(cn.data(), &[0.0, 0.0]);
    }

    #[test]
    fn lstm_zero_params_carries_half_cell() {
        // all gates sit at sigmoid(0)=0.5 and the candidate at tanh(0)=0, so
        // c' = 0.5 c0 and h' = 0.5 tanh(0.5 c0)
        let p = LstmParams::<f64>::zeros(2, 2);
        let x = NdArray::zeros(&[1, 2]);
        let h = NdArray::zeros(&[1, 2]);
        let c = NdArray::from_vec(&[1, 2], vec![0.8, -1.2]).unwrap();
        let (hn, cn) = lstm_step(&x, &h, &c, &p).unwrap();
        for j in 0..2 {
            let expect_c = 0.5 * c.data()[j];
            assert!((cn.data()[j] - expect_c).abs() < 1e-15);
            assert!((hn.data()[j] - 0.5 * expect_c.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn lstm_width_mismatch_is_error() {
        let p = LstmParams::<f64>::zeros(2, 2);
        let x = NdArray::zeros(&[1, 2]);
        let h = NdArray::zeros(&[1, 3]);
        let c = NdArray::zeros(&[1, 2]);
        assert!(lstm_step(&x, &h, &c, &p).is_err());
    }

    #[test]
    fn lstm_graph_matches_inference_path() {
        let mut rng_state = 42u64;
        let mut next = move || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng_state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let (n_in, hid, b) = (3, 4, 2);
        let mut p = LstmParams::<f64>::zeros(n_in, hid);
        p.w_x = NdArray::from_fn(&[n_in, 4 * hid], |_| next() * 0.5);
        p.w_h = NdArray::from_fn(&[hid, 4 * hid], |_| next() * 0.5);
        p.bias = NdArray::from_fn(&[4 * hid], |_| next() * 0.5);
        let x = NdArray::from_fn(&[b, n_in], |_| next());
        let h = NdArray::from_fn(&[b, hid], |_| next());
        let c = NdArray::from_fn(&[b, hid], |_| next());

        let (hn, cn) = lstm_step(&x, &h, &c, &p).unwrap();

        let mut g = Graph::<f64>::new();
        let xv = g.constant(x);
        let hv = g.constant(h);
        let cv = g.constant(c);
        let vars = LstmVars {
            w_x: g.leaf(p.w_x.clone()),
            w_h: g.leaf(p.w_h.clone()),
            bias: g.leaf(p.bias.clone()),
        };
        let (hg, cg) = lstm_step_graph(&mut g, xv, hv, cv, vars, hid);
        for i in 0..b * hid {
            assert!((g.value(hg).data()[i] - hn.data()[i]).abs() < 1e-14);
            assert!((g.value(cg).data()[i] - cn.data()[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn conv_one_by_one_identity() {
        let x = NdArray::from_fn(&[1, 3, 4], |i| i as f64 * 0.1);
        let w = NdArray::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let b = arr(&[0.0]);
        let y = conv2d_forward(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_averaging_kernel_on_constant_image() {
        let x = NdArray::full(&[1, 5, 5], 3.0f64);
        let w = NdArray::full(&[1, 1, 3, 3], 1.0 / 9.0);
        let b = arr(&[0.0]);
        let y = conv2d_forward(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3]);
        for &v in y.data() {
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_invalid_stride_is_error() {
        let x = NdArray::full(&[1, 5, 5], 1.0f64);
        let w = NdArray::full(&[1, 1, 3, 3], 1.0);
        let b = arr(&[0.0]);
        assert!(conv2d_forward(&x, &w, &b, 0, 1).is_err());
        let big = NdArray::full(&[1, 1, 9, 9], 1.0);
        let b1 = arr(&[0.0]);
        assert!(conv2d_forward(&x, &big, &b1, 1, 1).is_err());
    }

    #[test]
    fn global_pool_basics() {
        let v = NdArray::full(&[3, 2, 2], 2.0f64);
        assert_eq!(global_pool(&v, PoolMode::Max).unwrap().data(), &[2.0, 2.0, 2.0]);
        assert_eq!(global_pool(&v, PoolMode::Avg).unwrap().data(), &[2.0, 2.0, 2.0]);
        let v = NdArray::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(global_pool(&v, PoolMode::Max).unwrap().data(), &[4.0]);
        assert_eq!(global_pool(&v, PoolMode::Avg).unwrap().data(), &[2.5]);
    }

    #[test]
    fn global_pool_matches_loop_oracle() {
        let v = NdArray::from_fn(&[4, 3, 5], |i| ((i * 2654435761) % 1000) as f64 / 1000.0 - 0.5);
        let mx = global_pool(&v, PoolMode::Max).unwrap();
        let av = global_pool(&v, PoolMode::Avg).unwrap();
        for ch in 0..4 {
            let mut best = f64::NEG_INFINITY;
            let mut sum = 0.0;
            for y in 0..3 {
                for x in 0..5 {
                    let val = v.data()[(ch * 3 + y) * 5 + x];
                    if val > best {
                        best = val;
                    }
                    sum += val;
                }
            }
            assert_eq!(mx.data()[ch], best);
            assert!((av.data()[ch] - sum / 15.0).abs() < 1e-15);
        }
    }

    #[test]
    fn global_pool_empty_extent_is_error() {
        let v = NdArray::<f64>::zeros(&[2, 0, 3]);
        assert!(global_pool(&v, PoolMode::Max).is_err());
    }

    #[test]
    fn tanh_gaussian_at_mode() {
        let k = 3;
        let zeros = NdArray::<f64>::zeros(&[k]);
        let (a, logp) = tanh_gaussian(&zeros, &zeros, &zeros);
        assert_eq!(a.data(), &[0.0; 3]);
        let expect = k as f64 * (-0.5 * (2.0 * std::f64::consts::PI).ln());
        assert!((logp - expect).abs() < 1e-5, "logp {logp} vs {expect}");
    }

    #[test]
    fn tanh_gaussian_action_strictly_inside_unit_box() {
        let mean = arr(&[1e6, -1e6, 0.0]);
        let log_std = arr(&[2.0, 2.0, 2.0]);
        let noise = arr(&[50.0, -50.0, 1e3]);
        let (a, logp) = tanh_gaussian(&mean, &log_std, &noise);
        for &v in a.data() {
            assert!(v > -1.0 && v < 1.0);
        }
        assert!(logp.is_finite());
    }

    #[test]
    fn tanh_gaussian_density_normalizes_in_1d() {
        // integrate the implied density over the action interval with the
        // trapezoid rule; mass should be ~1 up to tail truncation
        let mean = 0.31;
        let log_std = -0.4;
        let n = 40_000;
        let lo = -1.0 + 1e-9;
        let hi = 1.0 - 1e-9;
        let std = (log_std as f64).exp();
        let mut mass = 0.0;
        let mut prev: Option<f64> = None;
        for i in 0..=n {
            let a = lo + (hi - lo) * i as f64 / n as f64;
            let u = 0.5 * ((1.0 + a) / (1.0 - a)).ln();
            let noise = (u - mean) / std;
            let (_, logp) = tanh_gaussian(
                &arr(&[mean]),
                &arr(&[log_std]),
                &arr(&[noise]),
            );
            let p = logp.exp();
            if let Some(pp) = prev {
                mass += 0.5 * (p + pp) * (hi - lo) / n as f64;
            }
            prev = Some(p);
        }
        assert!((mass - 1.0).abs() < 1e-3, "mass {mass}");
    }

    #[test]
    fn tanh_gaussian_logp_decreases_with_noise_magnitude() {
        let mean = arr(&[0.2]);
        let ls = arr(&[-0.5]);
        let mut last = f64::INFINITY;
        for n in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let (_, logp) = tanh_gaussian(&mean, &ls, &arr(&[n]));
            assert!(logp < last);
            last = logp;
        }
    }

    #[test]
    fn tanh_gaussian_graph_matches_scalar_path() {
        let mean = NdArray::from_vec(&[2, 2], vec![0.1, -0.3, 0.7, 0.0]).unwrap();
        let ls = NdArray::from_vec(&[2, 2], vec![-0.2, 0.4, -1.0, 0.1]).unwrap();
        let noise = NdArray::from_vec(&[2, 2], vec![0.5, -1.5, 0.3, 2.0]).unwrap();
        let mut g = Graph::<f64>::new();
        let m = g.leaf(mean.clone());
        let l = g.leaf(ls.clone());
        let (a, logp) = tanh_gaussian_graph(&mut g, m, l, &noise);
        for row in 0..2 {
            let mv = NdArray::from_vec(&[2], mean.row(row).to_vec()).unwrap();
            let lv = NdArray::from_vec(&[2], ls.row(row).to_vec()).unwrap();
            let nv = NdArray::from_vec(&[2], noise.row(row).to_vec()).unwrap();
            let (av, lp) = tanh_gaussian(&mv, &lv, &nv);
            for j in 0..2 {
                assert!((g.value(a).at2(row, j) - av.data()[j]).abs() < 1e-14);
            }
            assert!((g.value(logp).data()[row] - lp).abs() < 1e-12);
        }
    }
}
