//! Fixed-step ODE transport of Gaussian noise along a learned velocity field.

mod integrate;
mod generate;

pub use generate::{generate, generate_batch, sample_noise, write_trajectory_csv, GeneratedSample, SampleSpec};
pub use integrate::{
    convergence_probe, integrate, integrate_with, transport, ConditionedNet, ConvergenceRow, Integrator, LinearField,
    Trajectory, VelocityField,
};
