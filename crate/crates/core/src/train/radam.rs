//! Rectified Adam without weight decay.

use crate::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RAdam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Step counter and moment buffers, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = sizes
            .into_iter()
            .map(|n| (vec![T::zero(); n], vec![T::zero(); n]))
            .unzip();
        Self { t: 0, m, v }
    }
}

/// One RAdam update. The step counter is incremented first; while the
/// variance estimate is untrustworthy (`ρ_t ≤ 4`) the update falls back to
/// bias-corrected momentum SGD.
pub fn radam_step<T: Real>(
    params: &mut [&mut Tensor<T>],
    grads: &[&Tensor<T>],
    state: &mut OptimizerState<T>,
    opt: &RAdam,
) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let t = state.t as f64;
    let (b1, b2) = (opt.beta1, opt.beta2);
    let bc1 = 1.0 - b1.powf(t);
    let bc2 = 1.0 - b2.powf(t);
    let rho_inf = 2.0 / (1.0 - b2) - 1.0;
    let rho_t = rho_inf - 2.0 * t * b2.powf(t) / bc2;
    let rect = if rho_t > 4.0 {
        Some(
            (((rho_t - 4.0) * (rho_t - 2.0) * rho_inf)
                / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
                .sqrt(),
        )
    } else {
        None
    };
    let (b1t, b2t) = (T::c(b1), T::c(b2));
    let (one_b1, one_b2) = (T::c(1.0 - b1), T::c(1.0 - b2));
    let inv_bc1 = T::c(1.0 / bc1);
    let inv_bc2 = T::c(1.0 / bc2);
    let eps = T::c(opt.eps);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        assert_eq!(p.len(), g.len());
        match rect {
            Some(r) => {
                let step = T::c(opt.lr * r);
                for i in 0..p.len() {
                    let gi = g.data[i];
                    m[i] = b1t * m[i] + one_b1 * gi;
                    v[i] = b2t * v[i] + one_b2 * gi * gi;
                    let m_hat = m[i] * inv_bc1;
                    let v_hat = (v[i] * inv_bc2).sqrt();
                    p.data[i] -= step * m_hat / (v_hat + eps);
                }
            }
            None => {
                let step = T::c(opt.lr);
                for i in 0..p.len() {
                    let gi = g.data[i];
                    m[i] = b1t * m[i] + one_b1 * gi;
                    v[i] = b2t * v[i] + one_b2 * gi * gi;
                    p.data[i] -= step * m[i] * inv_bc1;
                }
            }
        }
    }
}
