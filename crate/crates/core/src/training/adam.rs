use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TwinFormerParams;
use crate::numerics::Tensor;

/// Anything that can enumerate named tensors in a stable order.
pub trait Parameters {
    fn for_each_param(&mut self, f: &mut dyn FnMut(&str, &mut Tensor));
}

impl Parameters for TwinFormerParams {
    fn for_each_param(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.visit_mut(&mut |name, t| f(&name, t));
    }
}

impl Parameters for [(String, Tensor)] {
    fn for_each_param(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (name, t) in self.iter_mut() {
            f(name, t);
        }
    }
}

impl Parameters for Vec<(String, Tensor)> {
    fn for_each_param(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.as_mut_slice().for_each_param(f);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// First and second moment buffers, in parameter visiting order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

/// One bias-corrected Adam update from the gradients stored on each
/// parameter. Gradients are consumed. Nothing is updated unless every
/// parameter carries a gradient of the right length.
pub fn adam_step<P: Parameters + ?Sized>(
    params: &mut P,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    let mut problem = None;
    let mut sizes = Vec::new();
    params.for_each_param(&mut |name, t| {
        if problem.is_some() {
            return;
        }
        match &t.grad {
            None => problem = Some(Error::MissingGradient(name.to_string())),
            Some(g) if g.len() != t.numel() => {
                problem = Some(Error::shape(
                    "adam_step",
                    format!(
                        "{name}: gradient has {} entries, parameter {}",
                        g.len(),
                        t.numel()
                    ),
                ))
            }
            Some(_) => sizes.push(t.numel()),
        }
    });
    if let Some(e) = problem {
        return Err(e);
    }
    if state.t == 0 && state.m.is_empty() {
        state.m = sizes.iter().map(|&n| vec![0.0; n]).collect();
        state.v = state.m.clone();
    }
    let matches =
        state.m.len() == sizes.len() && state.m.iter().zip(&sizes).all(|(m, &n)| m.len() == n);
    if !matches {
        return Err(Error::shape(
            "adam_step",
            "optimizer state does not match the parameters",
        ));
    }

    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let mut i = 0;
    params.for_each_param(&mut |_, p| {
        let g = p.grad.take().expect("checked above");
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (k, w) in p.data_mut().iter_mut().enumerate() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        i += 1;
    });
    Ok(())
}
