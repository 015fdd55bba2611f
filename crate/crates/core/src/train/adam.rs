//! Bias-corrected Adam with optional L2 weight decay folded into the gradient.

use std::collections::BTreeMap;

use crate::autodiff::{Gradients, ParameterStore, Real, Tensor};
use crate::error::{KgcError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if !ok {
            return Err(KgcError::config(format!(
                "train: invalid optimizer settings {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Adam<T: Real> {
    config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, (Tensor<T>, Tensor<T>)>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every parameter that has a gradient.
    pub fn step(&mut self, store: &mut ParameterStore<T>, grads: &Gradients<T>) -> Result<()> {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let correct1 = 1.0 - c.beta1.powi(t);
        let correct2 = 1.0 - c.beta2.powi(t);
        for (name, g) in grads.params() {
            let theta = store
                .get_mut(name)
                .ok_or_else(|| KgcError::Contract(format!("gradient for unknown parameter {name}")))?;
            if theta.shape() != g.shape() {
                return Err(KgcError::shape("adam", format!("{name}: {:?} vs {:?}", theta.shape(), g.shape())));
            }
            let (m, v) = self
                .moments
                .entry(name.to_owned())
                .or_insert_with(|| (Tensor::zeros(g.shape()), Tensor::zeros(g.shape())));
            let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
            let (lr, eps, wd) = (T::lit(c.lr), T::lit(c.eps), T::lit(c.weight_decay));
            let (k1, k2) = (T::lit(1.0 / correct1), T::lit(1.0 / correct2));
            let ms = m.data_mut();
            let vs = v.data_mut();
            for (i, (p, &gi)) in theta.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gi = gi + wd * *p;
                ms[i] = b1 * ms[i] + (T::one() - b1) * gi;
                vs[i] = b2 * vs[i] + (T::one() - b2) * gi * gi;
                let mhat = ms[i] * k1;
                let vhat = vs[i] * k2;
                *p = *p - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
