use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Optimizer state for one parameter list. The learning-rate schedule is
/// the caller's business; this stores only the current `lr`.
#[derive(Clone, Debug)]
pub struct AdamState<E> {
    first_moment: Vec<Tensor<E>>,
    second_moment: Vec<Tensor<E>>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<E: Scalar> AdamState<E> {
    pub fn new(param_shapes: &[Vec<usize>], lr: f64) -> Self {
        AdamState {
            first_moment: param_shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            second_moment: param_shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over a parameter list, in place.
pub fn adam_step<E: Scalar>(
    params: &mut [&mut Tensor<E>],
    grads: &[Tensor<E>],
    state: &mut AdamState<E>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{} params, {} grads, {} state slots",
                params.len(),
                grads.len(),
                state.first_moment.len()
            ),
        ));
    }
    for (p, g) in params.iter().zip(grads.iter()) {
        if p.shape() != g.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("param {:?} vs grad {:?}", p.shape(), g.shape()),
            ));
        }
        if !g.all_finite() {
            return Err(Error::NonFinite { op: "adam_step gradient" });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let b1 = E::from_f64(state.beta1);
    let b2 = E::from_f64(state.beta2);
    let one_m_b1 = E::from_f64(1.0 - state.beta1);
    let one_m_b2 = E::from_f64(1.0 - state.beta2);
    let corr1 = E::from_f64(1.0 - state.beta1.powi(t));
    let corr2 = E::from_f64(1.0 - state.beta2.powi(t));
    let lr = E::from_f64(state.lr);
    let eps = E::from_f64(state.eps);

    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.first_moment.iter_mut().zip(state.second_moment.iter_mut()))
    {
        for ((pv, &gv), (mv, vv)) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
        {
            *mv = b1 * *mv + one_m_b1 * gv;
            *vv = b2 * *vv + one_m_b2 * gv * gv;
            let m_hat = *mv / corr1;
            let v_hat = *vv / corr2;
            *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
