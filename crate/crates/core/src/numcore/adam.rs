use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::scalar::Scalar;

/// Bias-corrected Adam. Moment buffers are created lazily on the first step
/// and then pinned to the parameter shapes seen there.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: u64,
    first_moment: Vec<Vec<T>>,
    second_moment: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Adam with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(lr: T) -> Self {
        AdamState {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[Vec<T>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<T>] {
        &self.second_moment
    }
}

/// Applies one Adam update to every parameter using its stored gradient.
pub fn adam_step<T: Scalar>(params: &mut [&mut Tensor<T>], state: &mut AdamState<T>) -> Result<()> {
    for (i, p) in params.iter().enumerate() {
        if p.grad().is_none() {
            return Err(Error::Usage(format!("parameter {i} has no gradient")));
        }
    }
    if state.first_moment.is_empty() {
        state.first_moment = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
        state.second_moment = state.first_moment.clone();
    }
    if state.first_moment.len() != params.len()
        || state
            .first_moment
            .iter()
            .zip(params.iter())
            .any(|(m, p)| m.len() != p.numel())
    {
        return Err(Error::Usage("parameter set changed between Adam steps".into()));
    }

    state.step += 1;
    let t = i32::try_from(state.step).unwrap_or(i32::MAX);
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);

    for (k, p) in params.iter_mut().enumerate() {
        let grad = p.grad().map(<[T]>::to_vec).unwrap_or_default();
        let m = &mut state.first_moment[k];
        let v = &mut state.second_moment[k];
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            let g = grad[j];
            m[j] = b1 * m[j] + (T::one() - b1) * g;
            v[j] = b2 * v[j] + (T::one() - b2) * g * g;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w = *w - state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}
