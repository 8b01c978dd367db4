use serde::{Deserialize, Serialize};

use super::spec::Params;
use crate::error::{dim_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be > 0", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// First/second moment estimates, one buffer per parameter buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        let shapes: Vec<usize> = params.buffers().iter().map(|b| b.len()).collect();
        Self {
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut Params, grads: &Params, state: &mut AdamState, hyper: &AdamConfig) -> Result<()> {
    let mut bufs = params.buffers_mut();
    let gbufs = grads.buffers();
    if bufs.len() != gbufs.len() || bufs.len() != state.m.len() {
        return Err(dim_err("parameter, gradient and state layouts differ"));
    }
    for ((p, g), (m, v)) in bufs.iter().zip(&gbufs).zip(state.m.iter().zip(&state.v)) {
        if p.len() != g.len() || p.len() != m.len() || p.len() != v.len() {
            return Err(dim_err("parameter, gradient and state buffer lengths differ"));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    for ((p, g), (m, v)) in bufs
        .iter_mut()
        .zip(&gbufs)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            p[i] -= hyper.lr * mhat / (vhat.sqrt() + hyper.epsilon);
        }
    }
    Ok(())
}
