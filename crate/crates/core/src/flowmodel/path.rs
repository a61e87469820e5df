//! Linear interpolation path and the flow-matching objective.

use super::net::{BoundNet, VelocityFieldNet};
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tape, Tensor, Var};

/// `(1 − t)·z0 + t·z1`. The endpoints return `z0` and `z1` unchanged.
pub fn interpolate(z0: &Tensor, z1: &Tensor, t: f64) -> Result<Tensor> {
    if z0.shape() != z1.shape() {
        return Err(Error::shape("interpolate", z0.shape(), z1.shape()));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("interpolation time {t} outside [0, 1]")));
    }
    if t == 0.0 {
        return Ok(z0.clone());
    }
    if t == 1.0 {
        return Ok(z1.clone());
    }
    z0.scale(1.0 - t).axpy(t, z1)
}

/// Row `i` of the result is `interpolate(z0[i], z1[i], ts[i])`.
pub fn interpolate_rows(z0: &Tensor, z1: &Tensor, ts: &[f64]) -> Result<Tensor> {
    let (n, _) = z0.dims2("interpolate_rows")?;
    if ts.len() != n {
        return Err(Error::shape("interpolate_rows", z0.shape(), &[ts.len()]));
    }
    let rows = (0..n)
        .map(|i| {
            let a = Tensor::from_vec(z0.row(i).to_vec());
            let b = Tensor::from_vec(z1.row(i).to_vec());
            interpolate(&a, &b, ts[i])
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack_rows(&rows)?.reshape(z0.shape())
}

/// One training batch: noise rows, data rows and condition rows.
#[derive(Clone, Debug)]
pub struct FlowBatch {
    pub z0: Tensor,
    pub z1: Tensor,
    pub conds: Tensor,
}

impl FlowBatch {
    pub fn new(z0: Tensor, z1: Tensor, conds: Tensor) -> Result<Self> {
        if z0.shape() != z1.shape() {
            return Err(Error::shape("flow batch", z0.shape(), z1.shape()));
        }
        let (n, _) = z0.dims2("flow batch")?;
        let (nc, _) = conds.dims2("flow batch")?;
        if n != nc {
            return Err(Error::shape("flow batch", z0.shape(), conds.shape()));
        }
        if n == 0 {
            return Err(Error::Contract("flow-matching batch is empty".into()));
        }
        Ok(FlowBatch { z0, z1, conds })
    }

    pub fn len(&self) -> usize {
        self.z0.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Regression target `z1 − z0`.
    pub fn target(&self) -> Result<Tensor> {
        self.z1.sub(&self.z0)
    }
}

/// One draw of `t ~ U[0, 1]` per sample.
pub fn draw_times(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.uniform()).collect()
}

/// Mean over rows of `‖v_i − (z1_i − z0_i)‖²`.
pub fn velocity_regression_loss(velocity: &Tensor, batch: &FlowBatch) -> Result<f64> {
    let residual = velocity.sub(&batch.target()?)?;
    Ok(residual.sum_squares() / batch.len() as f64)
}

/// Flow-matching loss with `t` drawn per sample from `rng`.
pub fn flow_matching_loss(net: &VelocityFieldNet, batch: &FlowBatch, rng: &mut Rng) -> Result<f64> {
    let ts = draw_times(batch.len(), rng);
    flow_matching_loss_at(net, batch, &ts)
}

/// Flow-matching loss at fixed per-sample times.
pub fn flow_matching_loss_at(net: &VelocityFieldNet, batch: &FlowBatch, ts: &[f64]) -> Result<f64> {
    let zt = interpolate_rows(&batch.z0, &batch.z1, ts)?;
    let v = net.forward_batch(&zt, ts, &batch.conds)?;
    velocity_regression_loss(&v, batch)
}

/// Differentiable flow-matching loss recorded on `tape`.
pub fn flow_matching_objective(
    tape: &Tape,
    net: &VelocityFieldNet,
    bound: &BoundNet,
    batch: &FlowBatch,
    ts: &[f64],
) -> Result<Var> {
    let zt = tape.constant(interpolate_rows(&batch.z0, &batch.z1, ts)?);
    let v = net.forward_tape(tape, bound, zt, ts, &batch.conds)?;
    let target = tape.constant(batch.target()?);
    let residual = tape.sub(v, target)?;
    let total = tape.sum_squares(residual)?;
    tape.scale(total, 1.0 / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowmodel::NetConfig;

    #[test]
    fn endpoints_and_midpoint() {
        let z0 = Tensor::from_vec(vec![0.0, 0.0]);
        let z1 = Tensor::from_vec(vec![2.0, 4.0]);
        assert_eq!(interpolate(&z0, &z1, 0.0).unwrap(), z0);
        assert_eq!(interpolate(&z0, &z1, 1.0).unwrap(), z1);
        assert_eq!(interpolate(&z0, &z1, 0.5).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn negative_zero_survives_endpoints() {
        let z0 = Tensor::from_vec(vec![-0.0]);
        let z1 = Tensor::from_vec(vec![-0.0]);
        assert!(interpolate(&z0, &z1, 0.0).unwrap().data()[0].is_sign_negative());
        assert!(interpolate(&z0, &z1, 1.0).unwrap().data()[0].is_sign_negative());
    }

    #[test]
    fn out_of_range_time() {
        let z = Tensor::zeros(&[2]);
        assert!(matches!(interpolate(&z, &z, 1.01), Err(Error::Domain(_))));
        assert!(matches!(interpolate(&z, &z, -0.1), Err(Error::Domain(_))));
        assert!(interpolate(&z, &Tensor::zeros(&[3]), 0.5).is_err());
    }

    fn toy_batch(z0: &[f64], z1: &[f64]) -> FlowBatch {
        let n = z0.len();
        FlowBatch::new(
            Tensor::new(vec![n, 1], z0.to_vec()).unwrap(),
            Tensor::new(vec![n, 1], z1.to_vec()).unwrap(),
            Tensor::zeros(&[n, 10]),
        )
        .unwrap()
    }

    #[test]
    fn perfect_velocity_has_zero_loss() {
        let batch = toy_batch(&[0.5, -1.0, 3.0], &[1.0, 2.0, -2.0]);
        let v = batch.target().unwrap();
        assert_eq!(velocity_regression_loss(&v, &batch).unwrap(), 0.0);
    }

    #[test]
    fn zero_net_losses() {
        let config = NetConfig {
            data_dim: 1,
            hidden: 4,
            resolution: None,
        };
        let net = VelocityFieldNet::zeros(config);
        let same = toy_batch(&[0.7, -0.2], &[0.7, -0.2]);
        assert_eq!(flow_matching_loss(&net, &same, &mut Rng::new(1)).unwrap(), 0.0);
        let single = toy_batch(&[0.0], &[2.0]);
        for seed in 0..5 {
            assert_eq!(flow_matching_loss(&net, &single, &mut Rng::new(seed)).unwrap(), 4.0);
        }
    }

    #[test]
    fn empty_batch_is_contract_error() {
        let r = FlowBatch::new(Tensor::zeros(&[0, 3]), Tensor::zeros(&[0, 3]), Tensor::zeros(&[0, 10]));
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn tape_objective_matches_plain_loss() {
        let config = NetConfig {
            data_dim: 4,
            hidden: 3,
            resolution: None,
        };
        let mut rng = Rng::new(5);
        let net = VelocityFieldNet::init(config, &mut rng);
        let batch = FlowBatch::new(rng.gaussian(&[3, 4]), rng.gaussian(&[3, 4]), Tensor::zeros(&[3, 10])).unwrap();
        let ts = [0.1, 0.6, 0.9];
        let tape = Tape::new();
        let bound = net.bind(&tape);
        let loss = flow_matching_objective(&tape, &net, &bound, &batch, &ts).unwrap();
        let plain = flow_matching_loss_at(&net, &batch, &ts).unwrap();
        assert!((tape.value(loss).item().unwrap() - plain).abs() < 1e-12);
    }
}
