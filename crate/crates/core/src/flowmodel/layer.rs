use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Rng, Tape, Tensor, Var};

/// Low-rank update `(alpha / rank) · B · A` for a `d × k` weight.
#[derive(Clone, Debug, PartialEq)]
pub struct LoraAdapter {
    /// `rank × k`
    pub a: Tensor,
    /// `d × rank`
    pub b: Tensor,
    pub rank: usize,
    pub alpha: f64,
}

impl LoraAdapter {
    /// `A ~ N(0, 1/rank)` entrywise and `B = 0`, so the update starts at zero.
    pub fn init(d: usize, k: usize, rank: usize, alpha: f64, rng: &mut Rng) -> Result<Self> {
        if rank == 0 || rank > d.min(k) {
            return Err(Error::Config(format!(
                "LoRA rank {rank} must lie in 1..={} for a {d}x{k} weight",
                d.min(k)
            )));
        }
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::Config(format!("LoRA alpha must be positive, got {alpha}")));
        }
        let std = (1.0 / rank as f64).sqrt();
        let a = rng.gaussian(&[rank, k]).scale(std);
        Ok(LoraAdapter {
            a,
            b: Tensor::zeros(&[d, rank]),
            rank,
            alpha,
        })
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    /// `(alpha / rank) · B · A`.
    pub fn delta(&self) -> Result<Tensor> {
        Ok(self.b.matmul(&self.a)?.scale(self.scale()))
    }

    pub fn parameter_count(&self) -> usize {
        self.a.numel() + self.b.numel()
    }
}

/// Affine map `y = x · Wᵀ + bias` with `W` stored `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearLayer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub adapter: Option<LoraAdapter>,
    pub frozen: bool,
}

/// Tape handles for one layer's parameters.
#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub weight: Var,
    pub bias: Var,
    pub lora: Option<(Var, Var)>,
}

impl LinearLayer {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        LinearLayer {
            weight: Tensor::zeros(&[out_dim, in_dim]),
            bias: Tensor::zeros(&[out_dim]),
            adapter: None,
            frozen: false,
        }
    }

    /// Weights `N(0, 1/in_dim)`, zero bias.
    pub fn init(out_dim: usize, in_dim: usize, rng: &mut Rng) -> Self {
        let std = (1.0 / in_dim as f64).sqrt();
        LinearLayer {
            weight: rng.gaussian(&[out_dim, in_dim]).scale(std),
            bias: Tensor::zeros(&[out_dim]),
            adapter: None,
            frozen: false,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn attach(&mut self, rank: usize, alpha: f64, rng: &mut Rng) -> Result<()> {
        self.adapter = Some(LoraAdapter::init(self.out_dim(), self.in_dim(), rank, alpha, rng)?);
        Ok(())
    }

    /// `W + (alpha / rank) · B · A`, or `W` without an adapter.
    pub fn effective_weight(&self) -> Result<Tensor> {
        match &self.adapter {
            Some(adapter) => self.weight.add(&adapter.delta()?),
            None => Ok(self.weight.clone()),
        }
    }

    /// Folds the adapter into the weight, dropping it.
    pub fn merged(&self) -> Result<LinearLayer> {
        Ok(LinearLayer {
            weight: self.effective_weight()?,
            bias: self.bias.clone(),
            adapter: None,
            frozen: self.frozen,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let w = self.effective_weight()?;
        x.matmul_nt(&w)?.add_row(&self.bias)
    }

    /// Records the parameters on `tape`; groups not marked trainable become
    /// constants.
    pub fn bind(&self, tape: &Tape, train_base: bool, train_adapter: bool) -> LayerVars {
        let record = |t: &Tensor, trainable: bool| {
            if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        LayerVars {
            weight: record(&self.weight, train_base),
            bias: record(&self.bias, train_base),
            lora: self
                .adapter
                .as_ref()
                .map(|ad| (record(&ad.a, train_adapter), record(&ad.b, train_adapter))),
        }
    }

    /// Same arithmetic as [`LinearLayer::forward`], recorded on `tape`.
    pub fn forward_tape(&self, tape: &Tape, vars: &LayerVars, x: Var) -> Result<Var> {
        let w = match (&self.adapter, vars.lora) {
            (Some(adapter), Some((a, b))) => {
                let ba = tape.matmul(b, a)?;
                let delta = tape.scale(ba, adapter.scale())?;
                tape.add(vars.weight, delta)?
            }
            _ => vars.weight,
        };
        let y = tape.matmul_nt(x, w)?;
        tape.add_row(y, vars.bias)
    }
}

/// Which layers of the velocity network carry adapters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoraConfig {
    pub rank: usize,
    pub alpha: f64,
    pub hidden1: bool,
    pub hidden2: bool,
    pub output: bool,
}

impl Default for LoraConfig {
    fn default() -> Self {
        LoraConfig {
            rank: 8,
            alpha: 8.0,
            hidden1: true,
            hidden2: true,
            output: true,
        }
    }
}

impl LoraConfig {
    pub fn enabled(&self) -> [bool; 3] {
        [self.hidden1, self.hidden2, self.output]
    }
}
