use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::layer::{LayerVars, LinearLayer, LoraConfig};
use crate::error::{Error, Result};
use crate::lesiondata::{ConditionVector, CONDITION_DIM};
use crate::numerics::{Rng, Tape, Tensor, Var};

pub const TIME_FEATURES: usize = 16;
pub const LAYER_NAMES: [&str; 3] = ["hidden1", "hidden2", "output"];

/// `[sin(2^i·π·t), cos(2^i·π·t)]` for `i = 0..8`, interleaved.
pub fn time_embedding(t: f64) -> [f64; TIME_FEATURES] {
    let mut out = [0.0; TIME_FEATURES];
    for i in 0..TIME_FEATURES / 2 {
        let angle = (1u32 << i) as f64 * PI * t;
        out[2 * i] = angle.sin();
        out[2 * i + 1] = angle.cos();
    }
    out
}

fn time_features(ts: &[f64]) -> Tensor {
    let data = ts.iter().flat_map(|&t| time_embedding(t)).collect();
    Tensor::new(vec![ts.len(), TIME_FEATURES], data).expect("time feature shape")
}

/// Data dimension, hidden width and (for image models) the resolution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub data_dim: usize,
    pub hidden: usize,
    pub resolution: Option<usize>,
}

impl NetConfig {
    /// Pixel-space model for `resolution × resolution` RGB images, with the
    /// default width for that resolution.
    pub fn for_resolution(resolution: usize) -> Self {
        let hidden = if resolution <= 16 { 1024 } else { 512 };
        NetConfig {
            data_dim: 3 * resolution * resolution,
            hidden,
            resolution: Some(resolution),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.data_dim + TIME_FEATURES + CONDITION_DIM
    }
}

/// Conditional velocity field `v(z, t, c)`: two tanh hidden layers over
/// `[z, time embedding, condition]` and a linear output of size `data_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityFieldNet {
    pub config: NetConfig,
    pub layers: [LinearLayer; 3],
}

/// Which parameter group an operation addresses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Base,
    Adapter,
}

/// Tape handles for every parameter of a network.
#[derive(Clone, Debug)]
pub struct BoundNet {
    pub layers: [LayerVars; 3],
}

impl BoundNet {
    /// Vars in the same order as [`VelocityFieldNet::parameters`].
    pub fn vars(&self, group: ParamGroup) -> Vec<Var> {
        let mut out = Vec::new();
        for l in &self.layers {
            match group {
                ParamGroup::Base => out.extend([l.weight, l.bias]),
                ParamGroup::Adapter => {
                    if let Some((a, b)) = l.lora {
                        out.extend([a, b]);
                    }
                }
            }
        }
        out
    }
}

impl VelocityFieldNet {
    pub fn init(config: NetConfig, rng: &mut Rng) -> Self {
        let (d, h, k) = (config.data_dim, config.hidden, config.input_dim());
        let layers = [
            LinearLayer::init(h, k, rng),
            LinearLayer::init(h, h, rng),
            LinearLayer::init(d, h, rng),
        ];
        VelocityFieldNet { config, layers }
    }

    pub fn zeros(config: NetConfig) -> Self {
        let (d, h, k) = (config.data_dim, config.hidden, config.input_dim());
        let layers = [
            LinearLayer::zeros(h, k),
            LinearLayer::zeros(h, h),
            LinearLayer::zeros(d, h),
        ];
        VelocityFieldNet { config, layers }
    }

    pub fn data_dim(&self) -> usize {
        self.config.data_dim
    }

    /// Attaches fresh adapters (`B = 0`) to the enabled layers and freezes the
    /// base weights.
    pub fn attach_lora(&mut self, lora: &LoraConfig, rng: &mut Rng) -> Result<()> {
        for (layer, enabled) in self.layers.iter_mut().zip(lora.enabled()) {
            layer.frozen = true;
            if enabled {
                layer.attach(lora.rank, lora.alpha, rng)?;
            }
        }
        Ok(())
    }

    pub fn has_adapters(&self) -> bool {
        self.layers.iter().any(|l| l.adapter.is_some())
    }

    /// Adapters folded into plain weights; the fast path for sampling.
    pub fn merged(&self) -> Result<VelocityFieldNet> {
        Ok(VelocityFieldNet {
            config: self.config.clone(),
            layers: [
                self.layers[0].merged()?,
                self.layers[1].merged()?,
                self.layers[2].merged()?,
            ],
        })
    }

    /// Weight and bias of every layer, or `A` and `B` of every adapter.
    pub fn parameters(&self, group: ParamGroup) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            match group {
                ParamGroup::Base => out.extend([&l.weight, &l.bias]),
                ParamGroup::Adapter => {
                    if let Some(ad) = &l.adapter {
                        out.extend([&ad.a, &ad.b]);
                    }
                }
            }
        }
        out
    }

    pub fn parameters_mut(&mut self, group: ParamGroup) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match group {
                ParamGroup::Base => out.extend([&mut l.weight, &mut l.bias]),
                ParamGroup::Adapter => {
                    if let Some(ad) = &mut l.adapter {
                        out.extend([&mut ad.a, &mut ad.b]);
                    }
                }
            }
        }
        out
    }

    pub fn parameter_count(&self, group: ParamGroup) -> usize {
        self.parameters(group).iter().map(|t| t.numel()).sum()
    }

    /// Group that training updates: adapters when attached, else the base.
    pub fn trainable_group(&self) -> ParamGroup {
        if self.has_adapters() {
            ParamGroup::Adapter
        } else {
            ParamGroup::Base
        }
    }

    fn assemble(&self, z: &Tensor, ts: &[f64], conds: &Tensor) -> Result<(Tensor, Tensor)> {
        let (n, d) = z.dims2("velocity input")?;
        if d != self.config.data_dim {
            return Err(Error::shape("velocity input", z.shape(), &[n, self.config.data_dim]));
        }
        if ts.len() != n || conds.shape() != [n, CONDITION_DIM] {
            return Err(Error::shape("velocity conditioning", conds.shape(), &[n, CONDITION_DIM]));
        }
        if let Some(t) = ts.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::Domain(format!("time {t} outside [0, 1]")));
        }
        Ok((time_features(ts), conds.clone()))
    }

    /// Batched velocity for `z: [n × D]`, one time and one condition row per
    /// sample.
    pub fn forward_batch(&self, z: &Tensor, ts: &[f64], conds: &Tensor) -> Result<Tensor> {
        let (temb, conds) = self.assemble(z, ts, conds)?;
        let x = Tensor::concat_cols(&[z, &temb, &conds])?;
        let h1 = self.layers[0].forward(&x)?.tanh();
        let h2 = self.layers[1].forward(&h1)?.tanh();
        self.layers[2].forward(&h2)
    }

    /// Velocity for a single `z` of `D` entries (any shape with `D` entries).
    pub fn forward(&self, z: &Tensor, t: f64, c: &ConditionVector) -> Result<Tensor> {
        if z.numel() != self.config.data_dim {
            return Err(Error::shape("forward", z.shape(), &[self.config.data_dim]));
        }
        let batch = z.reshape(&[1, self.config.data_dim])?;
        let cond = c.to_tensor().reshape(&[1, CONDITION_DIM])?;
        self.forward_batch(&batch, &[t], &cond)?.reshape(z.shape())
    }

    /// Records every parameter as a differentiable leaf.
    pub fn bind(&self, tape: &Tape) -> BoundNet {
        self.bind_with(tape, true, true)
    }

    /// Records only `group` as differentiable; the rest become constants.
    pub fn bind_for_training(&self, tape: &Tape, group: ParamGroup) -> BoundNet {
        self.bind_with(tape, group == ParamGroup::Base, group == ParamGroup::Adapter)
    }

    fn bind_with(&self, tape: &Tape, train_base: bool, train_adapter: bool) -> BoundNet {
        BoundNet {
            layers: [
                self.layers[0].bind(tape, train_base, train_adapter),
                self.layers[1].bind(tape, train_base, train_adapter),
                self.layers[2].bind(tape, train_base, train_adapter),
            ],
        }
    }

    /// [`VelocityFieldNet::forward_batch`] recorded on a tape.
    pub fn forward_tape(
        &self,
        tape: &Tape,
        bound: &BoundNet,
        z: Var,
        ts: &[f64],
        conds: &Tensor,
    ) -> Result<Var> {
        let (temb, conds) = self.assemble(&tape.value(z), ts, conds)?;
        let temb = tape.constant(temb);
        let conds = tape.constant(conds);
        let x = tape.concat_cols(&[z, temb, conds])?;
        let h1 = self.layers[0].forward_tape(tape, &bound.layers[0], x)?;
        let h1 = tape.tanh(h1)?;
        let h2 = self.layers[1].forward_tape(tape, &bound.layers[1], h1)?;
        let h2 = tape.tanh(h2)?;
        self.layers[2].forward_tape(tape, &bound.layers[2], h2)
    }
}
