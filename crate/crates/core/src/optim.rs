//! Adam moment updates shared by regressor training and prompt ascent.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Applies one bias-corrected Adam step at step number `t >= 1`.
///
/// `direction` is `-1.0` to descend the objective and `+1.0` to ascend it.
/// Weight decay is folded into the gradient (L2 style).
pub fn adam_update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], t: u64, hp: &AdamHyper, direction: f64) {
    debug_assert!(t >= 1);
    let bc1 = 1.0 - hp.beta1.powi(t as i32);
    let bc2 = 1.0 - hp.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i] - direction * hp.weight_decay * params[i];
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] += direction * hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
}
