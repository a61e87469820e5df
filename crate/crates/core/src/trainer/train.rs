use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::checkpoint::{Architecture, Checkpoint, TrainingMetadata};
use super::optim::{Adam, Schedule};
use crate::error::{Error, Result};
use crate::flowmodel::{draw_times, flow_matching_objective, FlowBatch, LoraConfig, NetConfig, ParamGroup, VelocityFieldNet};
use crate::lesiondata::{Label, Manifest, ManifestRecord, Split, CONDITION_DIM};
use crate::numerics::{derive_seed, Rng, Tape, Tensor};

const INIT_STREAM: u64 = 0x1a17;
const SHUFFLE_STREAM: u64 = 0x5b0f;
const NOISE_STREAM: u64 = 0x2015e;
const ADAPTER_STREAM: u64 = 0xada9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule: Schedule,
    pub seed: u64,
    pub resolution: usize,
    /// Hidden width; `None` picks the default for the resolution.
    pub hidden: Option<usize>,
    /// Restricts training to one class of the train split.
    pub label: Option<Label>,
    pub freeze_base: bool,
    pub lora: Option<LoraConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            schedule: Schedule::Cosine,
            seed: 1,
            resolution: 16,
            hidden: None,
            label: None,
            freeze_base: false,
            lora: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "train.learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.hidden == Some(0) {
            return Err(Error::Config("train.hidden must be at least 1".into()));
        }
        Ok(())
    }

    pub fn net_config(&self) -> NetConfig {
        let mut config = NetConfig::for_resolution(self.resolution);
        if let Some(h) = self.hidden {
            config.hidden = h;
        }
        config
    }
}

/// Mean training loss per epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub losses: Vec<f64>,
}

impl LossCurve {
    pub fn first(&self) -> Option<f64> {
        self.losses.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.losses.last().copied()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            writeln!(out, "{},{l}", i + 1).expect("string write");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Pixels and conditions of one split, ready for batching.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub pixels: Tensor,
    pub conds: Tensor,
}

impl TrainingSet {
    pub fn from_records(manifest: &Manifest, records: &[&ManifestRecord]) -> Result<Self> {
        let pixels = manifest.load_pixels(records)?;
        let rows: Vec<f64> = Manifest::load_conditions(records)?
            .iter()
            .flat_map(|c| c.values().to_vec())
            .collect();
        let conds = Tensor::new(vec![records.len(), CONDITION_DIM], rows)?;
        Ok(TrainingSet { pixels, conds })
    }

    /// Split rows at `resolution`, optionally of one class.
    pub fn load(manifest: &Manifest, split: Split, resolution: usize, label: Option<Label>) -> Result<Self> {
        let records = manifest.select(split, resolution, label);
        if records.is_empty() {
            let class = label.map(|l| format!(" {l}")).unwrap_or_default();
            return Err(Error::Data(format!(
                "no{class} {split:?} records at resolution {resolution}"
            )));
        }
        Self::from_records(manifest, &records)
    }

    pub fn len(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn gather(&self, rows: &[usize]) -> Result<(Tensor, Tensor)> {
        let d = self.pixels.shape()[1];
        let mut px = Vec::with_capacity(rows.len() * d);
        let mut cs = Vec::with_capacity(rows.len() * CONDITION_DIM);
        for &r in rows {
            px.extend_from_slice(self.pixels.row(r));
            cs.extend_from_slice(self.conds.row(r));
        }
        Ok((
            Tensor::new(vec![rows.len(), d], px)?,
            Tensor::new(vec![rows.len(), CONDITION_DIM], cs)?,
        ))
    }
}

/// Flow-matching loss of `net` over all of `data`, with noise and times drawn
/// from `seed`. Evaluated in chunks, weighted by chunk size.
pub fn evaluate_loss(net: &VelocityFieldNet, data: &TrainingSet, seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let rows: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for chunk in rows.chunks(64) {
        let (z1, conds) = data.gather(chunk)?;
        let z0 = rng.gaussian(z1.shape());
        let ts = draw_times(chunk.len(), &mut rng);
        let batch = FlowBatch::new(z0, z1, conds)?;
        total += crate::flowmodel::flow_matching_loss_at(net, &batch, &ts)? * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Runs the optimization loop on `group`, returning the loss curve and step
/// count.
fn optimize(net: &mut VelocityFieldNet, data: &TrainingSet, config: &TrainConfig, group: ParamGroup) -> Result<(LossCurve, u64)> {
    let n = data.len();
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = (config.epochs * batches_per_epoch) as f64;
    let numels: Vec<usize> = net.parameters(group).iter().map(|t| t.numel()).collect();
    let mut adam = Adam::new(&numels);
    let mut curve = LossCurve::default();

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        Rng::new(derive_seed(&[config.seed, SHUFFLE_STREAM, epoch as u64])).shuffle(&mut order);
        let mut noise = Rng::new(derive_seed(&[config.seed, NOISE_STREAM, epoch as u64]));
        let mut sum = 0.0;

        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let (z1, conds) = data.gather(chunk)?;
            let z0 = noise.gaussian(z1.shape());
            let ts = draw_times(chunk.len(), &mut noise);
            let batch = FlowBatch::new(z0, z1, conds)?;

            let tape = Tape::new();
            let bound = net.bind_for_training(&tape, group);
            let loss = flow_matching_objective(&tape, net, &bound, &batch, &ts)?;
            let value = tape.value(loss).item()?;
            if !value.is_finite() {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    batch: b + 1,
                    loss: value,
                });
            }
            let grads = tape.backward(loss)?;
            let grads: Vec<Tensor> = bound.vars(group).into_iter().map(|v| grads.get(v)).collect();
            let progress = adam.steps_taken() as f64 / total_steps;
            let lr = config.schedule.rate(config.learning_rate, progress);
            adam.step(&mut net.parameters_mut(group), &grads, lr)?;
            sum += value * chunk.len() as f64;
        }
        curve.losses.push(sum / n as f64);
    }
    Ok((curve, adam.steps_taken()))
}

/// Trains every parameter of a freshly initialized network on the train split.
pub fn train_base(manifest: &Manifest, config: &TrainConfig) -> Result<(Checkpoint, LossCurve)> {
    config.validate()?;
    if config.lora.is_some() {
        return Err(Error::Config("base training takes no lora section; use finetune".into()));
    }
    let data = TrainingSet::load(manifest, Split::Train, config.resolution, config.label)?;
    train_base_on(&data, config)
}

/// [`train_base`] over an already loaded training set.
pub fn train_base_on(data: &TrainingSet, config: &TrainConfig) -> Result<(Checkpoint, LossCurve)> {
    config.validate()?;
    let net_config = config.net_config();
    if data.pixels.shape()[1] != net_config.data_dim {
        return Err(Error::shape("train_base", data.pixels.shape(), &[data.len(), net_config.data_dim]));
    }
    let mut net = VelocityFieldNet::init(net_config, &mut Rng::new(derive_seed(&[config.seed, INIT_STREAM])));
    let (curve, steps) = optimize(&mut net, data, config, ParamGroup::Base)?;
    let checkpoint = Checkpoint {
        net,
        lora: None,
        metadata: TrainingMetadata {
            config: config.clone(),
            final_loss: curve.last(),
            seed: config.seed,
            steps,
        },
    };
    Ok((checkpoint, curve))
}

/// Attaches adapters to a copy of `base` and trains only the adapters.
///
/// `epochs = 0` is accepted here and returns the freshly attached adapters.
pub fn finetune_lora(base: &Checkpoint, manifest: &Manifest, config: &TrainConfig) -> Result<(Checkpoint, LossCurve)> {
    let data = TrainingSet::load(manifest, Split::Train, config.resolution, config.label)?;
    finetune_lora_on(base, &data, config)
}

/// [`finetune_lora`] over an already loaded training set.
pub fn finetune_lora_on(base: &Checkpoint, data: &TrainingSet, config: &TrainConfig) -> Result<(Checkpoint, LossCurve)> {
    let lora = config
        .lora
        .clone()
        .ok_or_else(|| Error::Config("finetune requires a lora section".into()))?;
    if !config.freeze_base {
        return Err(Error::Config("finetune requires train.freeze_base = true".into()));
    }
    if base.lora.is_some() || base.net.has_adapters() {
        return Err(Error::Config("base checkpoint already carries adapters".into()));
    }
    if config.epochs > 0 {
        config.validate()?;
    }
    let mut expected = Architecture::of(&VelocityFieldNet::zeros(config.net_config()));
    if config.hidden.is_none() {
        expected.hidden = base.net.config.hidden;
    }
    base.architecture().ensure_matches(&expected)?;

    let mut net = base.net.clone();
    net.attach_lora(&lora, &mut Rng::new(derive_seed(&[config.seed, ADAPTER_STREAM])))?;
    let (curve, steps) = if config.epochs == 0 {
        (LossCurve::default(), 0)
    } else {
        optimize(&mut net, data, config, ParamGroup::Adapter)?
    };
    let checkpoint = Checkpoint {
        net,
        lora: Some(lora),
        metadata: TrainingMetadata {
            config: config.clone(),
            final_loss: curve.last(),
            seed: config.seed,
            steps,
        },
    };
    Ok((checkpoint, curve))
}

/// Adapter parameter count `Σ r·(d + k)` over enabled layers.
pub fn lora_parameter_count(net_config: &NetConfig, lora: &LoraConfig) -> usize {
    let (d, h, k) = (net_config.data_dim, net_config.hidden, net_config.input_dim());
    let shapes = [(h, k), (h, h), (d, h)];
    shapes
        .iter()
        .zip(lora.enabled())
        .filter(|(_, on)| *on)
        .map(|((out, inp), _)| lora.rank * (out + inp))
        .sum()
}
