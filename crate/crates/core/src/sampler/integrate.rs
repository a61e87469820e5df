use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowmodel::VelocityFieldNet;
use crate::lesiondata::{ConditionVector, CONDITION_DIM};
use crate::numerics::Tensor;

/// A time-dependent vector field over rows of `z: [n × D]`.
pub trait VelocityField {
    fn dim(&self) -> usize;
    fn velocity(&self, z: &Tensor, t: f64) -> Result<Tensor>;
}

/// A network paired with one condition row per sample.
pub struct ConditionedNet<'a> {
    pub net: &'a VelocityFieldNet,
    pub conds: Tensor,
}

impl<'a> ConditionedNet<'a> {
    /// The same condition for each of `n` rows.
    pub fn uniform(net: &'a VelocityFieldNet, cond: &ConditionVector, n: usize) -> Self {
        let rows: Vec<f64> = (0..n).flat_map(|_| cond.values().to_vec()).collect();
        ConditionedNet {
            net,
            conds: Tensor::new(vec![n, CONDITION_DIM], rows).expect("condition rows"),
        }
    }
}

impl VelocityField for ConditionedNet<'_> {
    fn dim(&self) -> usize {
        self.net.data_dim()
    }

    fn velocity(&self, z: &Tensor, t: f64) -> Result<Tensor> {
        let n = z.shape()[0];
        self.net.forward_batch(z, &vec![t; n], &self.conds)
    }
}

/// `v(z, t) = rate · z`, whose exact flow over `[0, 1]` is `z0 · e^rate`.
#[derive(Clone, Copy, Debug)]
pub struct LinearField {
    pub rate: f64,
    pub dim: usize,
}

impl LinearField {
    pub fn exact(&self, z0: f64) -> f64 {
        z0 * self.rate.exp()
    }
}

impl VelocityField for LinearField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn velocity(&self, z: &Tensor, _t: f64) -> Result<Tensor> {
        Ok(z.scale(self.rate))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Euler,
    Midpoint,
    Rk4,
}

impl Integrator {
    pub const ALL: [Integrator; 3] = [Integrator::Euler, Integrator::Midpoint, Integrator::Rk4];

    pub fn as_str(self) -> &'static str {
        match self {
            Integrator::Euler => "euler",
            Integrator::Midpoint => "midpoint",
            Integrator::Rk4 => "rk4",
        }
    }

    pub fn order(self) -> u32 {
        match self {
            Integrator::Euler => 1,
            Integrator::Midpoint => 2,
            Integrator::Rk4 => 4,
        }
    }

    /// One step from `z` at step index `k` of `n`.
    fn step(self, field: &dyn VelocityField, z: &Tensor, k: usize, n: usize) -> Result<Tensor> {
        let nf = n as f64;
        let dt = 1.0 / nf;
        let t = k as f64 / nf;
        match self {
            Integrator::Euler => z.axpy(dt, &field.velocity(z, t)?),
            Integrator::Midpoint => {
                let t_mid = (2 * k + 1) as f64 / (2.0 * nf);
                let k1 = field.velocity(z, t)?;
                let k2 = field.velocity(&z.axpy(0.5 * dt, &k1)?, t_mid)?;
                z.axpy(dt, &k2)
            }
            Integrator::Rk4 => {
                let t_mid = (2 * k + 1) as f64 / (2.0 * nf);
                let t_end = (k + 1) as f64 / nf;
                let k1 = field.velocity(z, t)?;
                let k2 = field.velocity(&z.axpy(0.5 * dt, &k1)?, t_mid)?;
                let k3 = field.velocity(&z.axpy(0.5 * dt, &k2)?, t_mid)?;
                let k4 = field.velocity(&z.axpy(dt, &k3)?, t_end)?;
                let slope = k1.add(&k2.scale(2.0))?.add(&k3.scale(2.0))?.add(&k4)?;
                z.axpy(dt / 6.0, &slope)
            }
        }
    }
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Integrator::ALL
            .into_iter()
            .find(|i| i.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown integrator {s:?}; expected euler, midpoint or rk4")))
    }
}

/// States at `t = 0, 1/steps, …, 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Tensor>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn initial(&self) -> &Tensor {
        &self.states[0]
    }

    pub fn last(&self) -> &Tensor {
        self.states.last().expect("trajectory holds at least z0")
    }
}

/// Integrates from `t = 0` to `1`, calling `observe(k, t_k, z_k)` on every
/// state including the first; returns the final state.
pub fn integrate_with(
    field: &dyn VelocityField,
    z0: &Tensor,
    steps: usize,
    integrator: Integrator,
    mut observe: impl FnMut(usize, f64, &Tensor),
) -> Result<Tensor> {
    if steps == 0 {
        return Err(Error::Config("steps must be at least 1".into()));
    }
    let (_, d) = z0.dims2("integrate")?;
    if d != field.dim() {
        return Err(Error::shape("integrate", z0.shape(), &[z0.shape()[0], field.dim()]));
    }
    let mut z = z0.clone();
    observe(0, 0.0, &z);
    for k in 0..steps {
        z = integrator.step(field, &z, k, steps)?;
        observe(k + 1, (k + 1) as f64 / steps as f64, &z);
    }
    Ok(z)
}

/// Full trajectory of `steps + 1` states for `z0: [n × D]`.
pub fn integrate(field: &dyn VelocityField, z0: &Tensor, steps: usize, integrator: Integrator) -> Result<Trajectory> {
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
    };
    integrate_with(field, z0, steps, integrator, |_, t, z| {
        traj.times.push(t);
        traj.states.push(z.clone());
    })?;
    Ok(traj)
}

/// Final state only.
pub fn transport(field: &dyn VelocityField, z0: &Tensor, steps: usize, integrator: Integrator) -> Result<Tensor> {
    integrate_with(field, z0, steps, integrator, |_, _, _| {})
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub steps: usize,
    pub value: f64,
    pub error: f64,
    /// `error(previous row) / error(this row)`.
    pub ratio: Option<f64>,
}

/// Error of `integrator` on the scalar field `v = rate·z` from `z0 = 1`, per
/// step count.
pub fn convergence_probe(field: LinearField, integrator: Integrator, steps: &[usize]) -> Result<Vec<ConvergenceRow>> {
    let exact = field.exact(1.0);
    let scalar = LinearField { dim: 1, ..field };
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(steps.len());
    for &n in steps {
        let value = transport(&scalar, &Tensor::full(&[1, 1], 1.0), n, integrator)?.data()[0];
        let error = (value - exact).abs();
        let ratio = rows.last().map(|prev| prev.error / error);
        rows.push(ConvergenceRow {
            steps: n,
            value,
            error,
            ratio,
        });
    }
    Ok(rows)
}
