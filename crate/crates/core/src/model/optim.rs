use crate::error::{Error, Result};

use super::real::Real;
use super::train::TrainConfig;

/// Single-cycle cosine annealing from `lr_max` at `t = 0` to `lr_min` at `t = max_iters`.
pub fn cosine_lr(t: u64, cfg: &TrainConfig) -> Result<f64> {
    if t > cfg.max_iters {
        return Err(Error::InvalidArgument(format!(
            "iteration {t} beyond max_iters {}",
            cfg.max_iters
        )));
    }
    if t == 0 {
        return Ok(cfg.lr_max);
    }
    if t == cfg.max_iters {
        return Ok(cfg.lr_min);
    }
    let phase = std::f64::consts::PI * t as f64 / cfg.max_iters as f64;
    let lr = cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + phase.cos());
    Ok(lr.clamp(cfg.lr_min, cfg.lr_max))
}

/// Adam with bias correction. Moments are kept in f64 whatever the parameter type.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step<T: Real>(&mut self, params: &mut [T], grads: &[T], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer holds {} moments, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient element {i}")));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let g = g.to_f64();
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let update = lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
            *p = T::from_f64(p.to_f64() - update);
        }
        Ok(())
    }
}
