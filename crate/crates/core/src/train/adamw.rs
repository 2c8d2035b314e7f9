use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Real;
use crate::velocity::{GradientBuffer, ParamSet};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moments for every parameter tensor, in `f64`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl OptimizerState {
    /// Fresh state shaped like the given tensors.
    pub fn for_shapes(lens: impl IntoIterator<Item = usize>) -> Self {
        let lens: Vec<usize> = lens.into_iter().collect();
        Self {
            step: 0,
            m: lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_params<T: Real>(params: &ParamSet<T>) -> Self {
        Self::for_shapes(params.tensors().iter().map(|t| t.len()))
    }

    fn check<T>(&self, params: &[&mut [T]], grads: &[&[T]]) -> Result<()> {
        let ok = params.len() == grads.len()
            && params.len() == self.m.len()
            && params.len() == self.v.len()
            && params
                .iter()
                .zip(grads)
                .zip(&self.m)
                .zip(&self.v)
                .all(|(((p, g), m), v)| p.len() == g.len() && p.len() == m.len() && p.len() == v.len());
        if !ok {
            return Err(Error::Shape("parameters, gradients and optimizer moments disagree".into()));
        }
        Ok(())
    }
}

/// One AdamW update over flat tensors.
///
/// Decoupled decay first (`θ ← θ·(1 − lr·λ)`), then the bias-corrected
/// Adam step `θ ← θ − lr·m̂/(√v̂ + ε)`.
pub fn adamw_update<T: Real>(
    params: &mut [&mut [T]],
    grads: &[&[T]],
    state: &mut OptimizerState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    state.check(params, grads)?;
    state.step += 1;
    let bc1 = 1.0 - BETA1.powi(state.step as i32);
    let bc2 = 1.0 - BETA2.powi(state.step as i32);
    let decay = 1.0 - lr * weight_decay;
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for (((p, g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            let g = g.to_f64();
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            let theta = p.to_f64() * decay - lr * m_hat / (v_hat.sqrt() + EPSILON);
            *p = T::from_f64(theta);
        }
    }
    Ok(())
}

pub fn adamw_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &GradientBuffer<T>,
    state: &mut OptimizerState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    let g = grads.tensors();
    let mut p = params.tensors_mut();
    adamw_update(&mut p, &g, state, lr, weight_decay)
}
