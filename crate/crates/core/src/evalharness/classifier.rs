use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowmodel::LinearLayer;
use crate::numerics::{derive_seed, Rng, Tape, Tensor};
use crate::trainer::{Adam, Schedule};

const SHUFFLE_STREAM: u64 = 0xc1a5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule: Schedule,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 40,
            batch_size: 32,
            learning_rate: 1e-2,
            schedule: Schedule::Cosine,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "classifier needs epochs ≥ 1, batch_size ≥ 1 and a positive learning rate, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Logistic probe over flattened pixels: one logit per image.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub layer: LinearLayer,
}

impl Classifier {
    /// Logit per row of `x: [n × D]`.
    pub fn scores(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self.layer.forward(x)?.into_vec())
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<bool>> {
        Ok(self.scores(x)?.into_iter().map(|s| s > 0.0).collect())
    }
}

fn gather(x: &Tensor, labels: &[bool], rows: &[usize]) -> Result<(Tensor, Tensor)> {
    let d = x.shape()[1];
    let mut px = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        px.extend_from_slice(x.row(r));
    }
    let y = rows.iter().map(|&r| if labels[r] { 1.0 } else { 0.0 }).collect();
    Ok((Tensor::new(vec![rows.len(), d], px)?, Tensor::new(vec![rows.len(), 1], y)?))
}

/// Adam on the mean logistic loss `softplus(s) − y·s`, zero-initialized and
/// shuffled per epoch from `seed`.
pub fn train_classifier(x: &Tensor, labels: &[bool], config: &ClassifierConfig, seed: u64) -> Result<Classifier> {
    config.validate()?;
    let (n, d) = x.dims2("train_classifier")?;
    if labels.len() != n {
        return Err(Error::shape("train_classifier", x.shape(), &[labels.len()]));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == n {
        return Err(Error::Data(format!(
            "classifier training set has a single class ({positives} positive of {n})"
        )));
    }

    let mut layer = LinearLayer::zeros(1, d);
    let mut adam = Adam::new(&[d, 1]);
    let total_steps = (config.epochs * n.div_ceil(config.batch_size)) as f64;
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        Rng::new(derive_seed(&[seed, SHUFFLE_STREAM, epoch as u64])).shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            let (xb, yb) = gather(x, labels, chunk)?;
            let tape = Tape::new();
            let vars = layer.bind(&tape, true, false);
            let xv = tape.constant(xb);
            let s = layer.forward_tape(&tape, &vars, xv)?;
            let y = tape.constant(yb);
            let ys = tape.mul(s, y)?;
            let sp = tape.softplus(s)?;
            let per = tape.sub(sp, ys)?;
            let loss = tape.mean(per)?;
            let grads = tape.backward(loss)?;
            let lr = config.schedule.rate(config.learning_rate, adam.steps_taken() as f64 / total_steps);
            adam.step(
                &mut [&mut layer.weight, &mut layer.bias],
                &[grads.get(vars.weight), grads.get(vars.bias)],
                lr,
            )?;
        }
    }
    Ok(Classifier { layer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalharness::accuracy;

    fn blobs(n: usize, d: usize, gap: f64, seed: u64) -> (Tensor, Vec<bool>) {
        let mut rng = Rng::new(seed);
        let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let mut x = rng.gaussian(&[n, d]).scale(0.5);
        for (i, &l) in labels.iter().enumerate() {
            x.data_mut()[i * d] += if l { gap } else { -gap };
        }
        (x, labels)
    }

    #[test]
    fn separable_set_is_learned() {
        let (x, y) = blobs(64, 5, 3.0, 1);
        let clf = train_classifier(&x, &y, &ClassifierConfig::default(), 1).unwrap();
        assert_eq!(accuracy(&clf.scores(&x).unwrap(), &y).unwrap(), 1.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let (x, y) = blobs(40, 4, 1.0, 2);
        let config = ClassifierConfig { epochs: 5, ..ClassifierConfig::default() };
        let a = train_classifier(&x, &y, &config, 3).unwrap();
        let b = train_classifier(&x, &y, &config, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_is_data_error() {
        let x = Tensor::zeros(&[3, 2]);
        let r = train_classifier(&x, &[true; 3], &ClassifierConfig::default(), 1);
        assert!(matches!(r, Err(Error::Data(_))));
    }
}
