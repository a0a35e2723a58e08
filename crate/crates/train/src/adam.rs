//! Adam over a group of candle variables.

use candle_core::{backprop::GradStore, Tensor, Var};

use crate::error::Result;

pub(crate) struct Adam {
    vars: Vec<Var>,
    lrs: Vec<f64>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    /// One learning rate per variable.
    pub fn new(vars: Vec<Var>, lrs: Vec<f64>) -> Result<Self> {
        let m = vars
            .iter()
            .map(|v| v.zeros_like())
            .collect::<candle_core::Result<Vec<_>>>()?;
        let v = m.clone();
        Ok(Adam {
            vars,
            lrs,
            m,
            v,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        })
    }

    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..self.vars.len() {
            let Some(g) = grads.get(self.vars[i].as_tensor()) else {
                continue;
            };
            self.m[i] = ((&self.m[i] * self.beta1)? + (g * (1.0 - self.beta1))?)?;
            self.v[i] = ((&self.v[i] * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?;
            let m_hat = (&self.m[i] / c1)?;
            let v_hat = (&self.v[i] / c2)?;
            let delta = (m_hat / (v_hat.sqrt()? + self.eps)?)?;
            let next = (self.vars[i].as_tensor() - (delta * self.lrs[i])?)?;
            self.vars[i].set(&next)?;
        }
        Ok(())
    }
}
