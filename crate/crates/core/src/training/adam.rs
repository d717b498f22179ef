use crate::error::{Error, Result};
use crate::model::{ParamGrads, PpnParams};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// First and second moment estimates for one flat tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamMoments {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// One bias-corrected Adam update. `t` is the 1-based step count.
    pub fn update(&mut self, param: &mut [f64], grad: &[f64], lr: f64, t: u64, hyper: &AdamHyper) {
        let t = i32::try_from(t).unwrap_or(i32::MAX);
        let c1 = 1.0 - hyper.beta1.powi(t);
        let c2 = 1.0 - hyper.beta2.powi(t);
        for i in 0..param.len() {
            let g = grad[i];
            self.m[i] = hyper.beta1 * self.m[i] + (1.0 - hyper.beta1) * g;
            self.v[i] = hyper.beta2 * self.v[i] + (1.0 - hyper.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            param[i] -= lr * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Optimizer state mirroring [`PpnParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub moments: Vec<AdamMoments>,
    pub step: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(params: &PpnParams) -> Self {
        Self::with_hyper(params, AdamHyper::default())
    }

    pub fn with_hyper(params: &PpnParams, hyper: AdamHyper) -> Self {
        Self {
            moments: params.tensors().iter().map(|t| AdamMoments::zeros(t.len())).collect(),
            step: 0,
            hyper,
        }
    }
}

/// Applies one Adam step in place. Non-finite gradients are rejected before
/// anything is modified.
pub fn adam_step(state: &mut AdamState, params: &mut PpnParams, grads: &ParamGrads, lr: f64) -> Result<()> {
    for (name, g) in PpnParams::TENSOR_NAMES.iter().zip(grads.tensors()) {
        if !g.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFiniteGradient(name));
        }
    }
    let shapes_match = params
        .tensors()
        .iter()
        .zip(grads.tensors())
        .zip(&state.moments)
        .all(|((p, g), m)| p.len() == g.len() && p.len() == m.m.len());
    if !shapes_match {
        return Err(Error::Contract("parameter, gradient and moment shapes differ".into()));
    }
    state.step += 1;
    let hyper = state.hyper;
    for ((p, g), m) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.moments.iter_mut())
    {
        m.update(p, g, lr, state.step, &hyper);
    }
    Ok(())
}
