use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Constant,
    Cosine,
}

impl Schedule {
    /// Learning rate at `progress ∈ [0, 1]` of the run.
    pub fn rate(self, base: f64, progress: f64) -> f64 {
        match self {
            Schedule::Constant => base,
            Schedule::Cosine => cosine_rate(base, progress),
        }
    }
}

/// `½ · base · (1 + cos(π · progress))`.
pub fn cosine_rate(base: f64, progress: f64) -> f64 {
    0.5 * base * (1.0 + (PI * progress.clamp(0.0, 1.0)).cos())
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(shapes: &[usize]) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Contract(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::shape("adam", p.shape(), g.shape()));
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert!((cosine_rate(1e-3, 0.0) - 1e-3).abs() <= 1e-12);
        assert!(cosine_rate(1e-3, 1.0).abs() <= 1e-12);
        assert!((cosine_rate(2.0, 0.5) - 1.0).abs() < 1e-15);
        assert_eq!(Schedule::Constant.rate(0.1, 0.7), 0.1);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut x = Tensor::from_vec(vec![3.0, -2.0]);
        let mut adam = Adam::new(&[2]);
        for _ in 0..2000 {
            let g = x.scale(2.0);
            adam.step(&mut [&mut x], &[g], 0.05).unwrap();
        }
        assert!(x.norm() < 1e-3, "{x:?}");
    }

    #[test]
    fn first_step_moves_by_lr() {
        // With bias correction the first update is lr · sign(g) (up to eps).
        let mut x = Tensor::from_vec(vec![1.0]);
        let mut adam = Adam::new(&[1]);
        adam.step(&mut [&mut x], &[Tensor::from_vec(vec![0.3])], 0.1).unwrap();
        assert!((x.data()[0] - 0.9).abs() < 1e-7);
    }
}
