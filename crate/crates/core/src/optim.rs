//! Parameter update rules.
//!
//! Both optimizers work on lists of flat tensors (`&mut [f64]` / `&[f64]`), so
//! they apply unchanged to dense weights, Chebyshev coefficients and biases.
//! Moment buffers are allocated on the first step and shape-checked after.

use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const DEFAULT_LR: f64 = 0.001;

pub trait Optimizer {
    fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()>;
}

/// Adam with the canonical moment decay rates; only the learning rate is
/// configurable.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }
}

impl Default for Adam {
    fn default() -> Self {
        Adam::new(DEFAULT_LR)
    }
}

fn check_shapes(state: &mut Vec<Vec<f64>>, params: &[&mut [f64]], grads: &[&[f64]]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::dims(
            "optimizer tensor count",
            params.len(),
            grads.len(),
        ));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.len() != g.len() {
            return Err(Error::dims("optimizer tensor length", p.len(), g.len()));
        }
    }
    if state.is_empty() {
        *state = params.iter().map(|p| vec![0.0; p.len()]).collect();
    } else if state.len() != params.len()
        || state.iter().zip(params).any(|(s, p)| s.len() != p.len())
    {
        return Err(Error::dims(
            "optimizer state shape",
            format!("{} tensors", state.len()),
            format!("{} tensors", params.len()),
        ));
    }
    Ok(())
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        check_shapes(&mut self.m, params, grads)?;
        check_shapes(&mut self.v, params, grads)?;
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * gi;
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}

/// Gradient descent with optional heavy-ball momentum:
/// `v <- momentum * v + g; theta <- theta - lr * v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        Ok(Sgd {
            lr,
            momentum,
            velocity: Vec::new(),
        })
    }
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        check_shapes(&mut self.velocity, params, grads)?;
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for i in 0..p.len() {
                v[i] = self.momentum * v[i] + g[i];
                p[i] -= self.lr * v[i];
            }
        }
        Ok(())
    }
}
