use super::{NdArray, Real};

/// Adam hyperparameters; beta/epsilon defaults are the usual ones.
#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        AdamHyper { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Per-tensor optimizer state; moment shapes always match the parameter.
#[derive(Clone, Debug)]
pub struct AdamState<R> {
    pub step: u64,
    pub m: NdArray<R>,
    pub v: NdArray<R>,
}

impl<R: Real> AdamState<R> {
    pub fn new(shape: &[usize]) -> Self {
        AdamState { step: 0, m: NdArray::zeros(shape), v: NdArray::zeros(shape) }
    }
}

/// Bias-corrected Adam update, in place. Deterministic given inputs.
pub fn adam_step<R: Real>(
    param: &mut NdArray<R>,
    grad: &NdArray<R>,
    st: &mut AdamState<R>,
    hp: &AdamHyper,
) {
    assert_eq!(param.shape(), grad.shape(), "adam_step: grad shape mismatch");
    assert_eq!(param.shape(), st.m.shape(), "adam_step: moment shape mismatch");
    st.step += 1;
    let b1 = R::of(hp.beta1);
    let b2 = R::of(hp.beta2);
    let one = R::one();
    let lr = R::of(hp.lr);
    let eps = R::of(hp.eps);
    let bc1 = one - R::of(hp.beta1.powi(st.step as i32));
    let bc2 = one - R::of(hp.beta2.powi(st.step as i32));
    for i in 0..param.len() {
        let g = grad.data()[i];
        let m = b1 * st.m.data()[i] + (one - b1) * g;
        let v = b2 * st.v.data()[i] + (one - b2) * g * g;
        st.m.data_mut()[i] = m;
        st.v.data_mut()[i] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        param.data_mut()[i] = param.data()[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// A named trainable tensor with its optimizer state.
#[derive(Clone, Debug)]
pub struct Param<R> {
    pub name: String,
    pub value: NdArray<R>,
    pub adam: AdamState<R>,
}

impl<R: Real> Param<R> {
    pub fn new(name: impl Into<String>, value: NdArray<R>) -> Self {
        let adam = AdamState::new(value.shape());
        Param { name: name.into(), value, adam }
    }
}
