use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
}

/// SGD with heavy-ball momentum and L2 weight decay:
/// `v <- momentum * v + g + weight_decay * w`, `w <- w - lr * v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    cfg: SgdConfig,
    velocity: Vec<Vec<f32>>,
}

impl Sgd {
    pub fn new(cfg: SgdConfig) -> Result<Self> {
        if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
            return Err(Error::Input(format!(
                "learning rate must be >= 0, got {}",
                cfg.lr
            )));
        }
        if !(0.0..1.0).contains(&cfg.momentum) {
            return Err(Error::Input(format!(
                "momentum must lie in [0, 1), got {}",
                cfg.momentum
            )));
        }
        if !(cfg.weight_decay >= 0.0) {
            return Err(Error::Input(format!(
                "weight decay must be >= 0, got {}",
                cfg.weight_decay
            )));
        }
        Ok(Self {
            cfg,
            velocity: Vec::new(),
        })
    }

    pub fn config(&self) -> SgdConfig {
        self.cfg
    }

    /// Momentum buffers, one per parameter, allocated on the first step.
    pub fn velocity_mut(&mut self) -> &mut [Vec<f32>] {
        &mut self.velocity
    }

    /// Applies one update and clears every gradient slot. Fails without
    /// touching any weight if a parameter is missing its gradient.
    pub fn step(&mut self, params: &mut [Tensor<f32>]) -> Result<()> {
        if let Some(i) = params.iter().position(|p| p.grad().is_none()) {
            return Err(Error::Usage(format!("parameter {i} has no gradient")));
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        } else if self.velocity.len() != params.len() {
            return Err(Error::Usage(
                "optimizer reused with a different parameter list".into(),
            ));
        }
        let SgdConfig {
            lr,
            momentum,
            weight_decay,
        } = self.cfg;
        for (p, v) in params.iter_mut().zip(&mut self.velocity) {
            let g = p.take_grad().expect("checked above");
            for ((w, vel), gv) in p.data_mut().iter_mut().zip(v.iter_mut()).zip(g) {
                *vel = momentum * *vel + gv + weight_decay * *w;
                *w -= lr * *vel;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(value: f32, grad: f32) -> Tensor<f32> {
        let mut t = Tensor::scalar(value);
        t.set_grad(vec![grad]).unwrap();
        t
    }

    fn sgd(lr: f32, momentum: f32, weight_decay: f32) -> Sgd {
        Sgd::new(SgdConfig {
            lr,
            momentum,
            weight_decay,
        })
        .unwrap()
    }

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut ps = vec![param(0.3, 0.0)];
        sgd(0.1, 0.9, 0.0).step(&mut ps).unwrap();
        assert_eq!(ps[0].item(), 0.3);
        assert!(ps[0].grad().is_none());
    }

    #[test]
    fn single_plain_step() {
        let mut ps = vec![param(1.0, 0.5)];
        sgd(0.1, 0.0, 0.0).step(&mut ps).unwrap();
        assert_eq!(ps[0].item(), 0.95);
    }

    #[test]
    fn momentum_recurrence_two_steps() {
        // v1 = g, w1 = w0 - lr g; v2 = 0.9 g + g, w2 = w1 - lr * 1.9 g
        let (w0, g, lr) = (1.0f64, 0.5f64, 0.1f64);
        let w1 = w0 - lr * g;
        let w2 = w1 - lr * (0.9 * g + g);
        let mut opt = sgd(0.1, 0.9, 0.0);
        let mut ps = vec![param(1.0, 0.5)];
        opt.step(&mut ps).unwrap();
        ps[0].set_grad(vec![0.5]).unwrap();
        opt.step(&mut ps).unwrap();
        assert!((ps[0].item() as f64 - w2).abs() < 1e-6);
    }

    #[test]
    fn missing_grad_is_usage_error() {
        let mut ps = vec![param(1.0, 0.5), Tensor::scalar(2.0)];
        let err = sgd(0.1, 0.0, 0.0).step(&mut ps).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
        assert_eq!(ps[0].item(), 1.0);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(Sgd::new(SgdConfig {
            lr: 0.1,
            momentum: 1.0,
            weight_decay: 0.0
        })
        .is_err());
        assert!(Sgd::new(SgdConfig {
            lr: -1.0,
            momentum: 0.0,
            weight_decay: 0.0
        })
        .is_err());
    }
}
