use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::integrate::{integrate_with, ConditionedNet, Integrator};
use crate::error::{Error, Result};
use crate::flowmodel::VelocityFieldNet;
use crate::lesiondata::{encode_caption, generation_prompt, Image, Label, CONDITION_DIM};
use crate::numerics::{derive_seed, Rng, Tensor};
use crate::trainer::Checkpoint;

const NOISE_STREAM: u64 = 0x5a3b1e;
const CHUNK_ROWS: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSpec {
    pub prompt: String,
    pub steps: usize,
    pub integrator: Integrator,
    pub seed: u64,
    pub count: usize,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            prompt: generation_prompt(Label::Malignant),
            steps: 20,
            integrator: Integrator::Euler,
            seed: 1,
            count: 1,
        }
    }
}

impl SampleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("sample.steps must be at least 1".into()));
        }
        if self.count == 0 {
            return Err(Error::Config("sample.count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn file_name(&self, index: usize) -> String {
        format!("sample_{}_{index}.ppm", self.seed)
    }
}

/// Noise for sample `index` under `seed`; independent of how many samples
/// are drawn.
pub fn sample_noise(seed: u64, index: usize, dim: usize) -> Vec<f64> {
    Rng::new(derive_seed(&[seed, NOISE_STREAM, index as u64]))
        .gaussian(&[dim])
        .into_vec()
}

/// Transports each row of `noise` under the matching row of `conds`.
/// Returns the final states and, when asked, per-row `‖z_k‖` at every step.
///
/// Rows never interact, so the result does not depend on chunking or thread
/// count.
pub fn generate_batch(
    net: &VelocityFieldNet,
    conds: &Tensor,
    noise: &Tensor,
    steps: usize,
    integrator: Integrator,
    record_norms: bool,
) -> Result<(Tensor, Vec<Vec<f64>>)> {
    let (n, d) = noise.dims2("generate")?;
    if conds.shape() != [n, CONDITION_DIM] {
        return Err(Error::shape("generate", conds.shape(), &[n, CONDITION_DIM]));
    }
    let ranges: Vec<(usize, usize)> = (0..n).step_by(CHUNK_ROWS).map(|s| (s, (s + CHUNK_ROWS).min(n))).collect();
    let parts = ranges
        .par_iter()
        .map(|&(start, end)| {
            let rows = end - start;
            let z0 = Tensor::new(vec![rows, d], noise.data()[start * d..end * d].to_vec())?;
            let field = ConditionedNet {
                net,
                conds: Tensor::new(
                    vec![rows, CONDITION_DIM],
                    conds.data()[start * CONDITION_DIM..end * CONDITION_DIM].to_vec(),
                )?,
            };
            let mut norms = vec![Vec::new(); if record_norms { rows } else { 0 }];
            let z = integrate_with(&field, &z0, steps, integrator, |_, _, z| {
                for (r, out) in norms.iter_mut().enumerate() {
                    out.push(z.row(r).iter().map(|v| v * v).sum::<f64>().sqrt());
                }
            })?;
            Ok((z, norms))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut finals = Vec::with_capacity(n * d);
    let mut norms = Vec::new();
    for (z, nz) in parts {
        finals.extend_from_slice(z.data());
        norms.extend(nz);
    }
    Ok((Tensor::new(vec![n, d], finals)?, norms))
}

#[derive(Clone, Debug)]
pub struct GeneratedSample {
    pub index: usize,
    pub image: Image,
    pub path: Option<PathBuf>,
    /// `‖z_k‖` for `k = 0..=steps`, when recorded.
    pub z_norms: Vec<f64>,
}

/// Samples `spec.count` images from `checkpoint`, writing PPM files into
/// `out_dir` when given. Adapters are merged into the base weights first.
pub fn generate(
    checkpoint: &Checkpoint,
    spec: &SampleSpec,
    out_dir: Option<&Path>,
    record_trajectory: bool,
) -> Result<Vec<GeneratedSample>> {
    spec.validate()?;
    let cond = encode_caption(&spec.prompt)?;
    let net = checkpoint.net.merged()?;
    let res = net.config.resolution.ok_or_else(|| Error::Compatibility {
        field: "resolution".into(),
        expected: "an image resolution".into(),
        found: "none".into(),
    })?;
    let d = net.data_dim();
    if d != 3 * res * res {
        return Err(Error::Compatibility {
            field: "data_dim".into(),
            expected: (3 * res * res).to_string(),
            found: d.to_string(),
        });
    }

    let noise: Vec<f64> = (0..spec.count).flat_map(|i| sample_noise(spec.seed, i, d)).collect();
    let noise = Tensor::new(vec![spec.count, d], noise)?;
    let conds = ConditionedNet::uniform(&net, &cond, spec.count).conds;
    let (finals, norms) = generate_batch(&net, &conds, &noise, spec.steps, spec.integrator, record_trajectory)?;

    let mut out = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let image = Image::from_normalized(finals.row(i), res, res)?;
        let path = match out_dir {
            Some(dir) => {
                let path = dir.join(spec.file_name(i));
                image.write_ppm(&path)?;
                Some(path)
            }
            None => None,
        };
        out.push(GeneratedSample {
            index: i,
            image,
            path,
            z_norms: norms.get(i).cloned().unwrap_or_default(),
        });
    }
    Ok(out)
}

/// `step,t,z_norm` rows for one sample.
pub fn write_trajectory_csv(path: &Path, steps: usize, z_norms: &[f64]) -> Result<()> {
    let mut csv = String::from("step,t,z_norm\n");
    for (k, norm) in z_norms.iter().enumerate() {
        writeln!(csv, "{k},{},{norm}", k as f64 / steps as f64).expect("string write");
    }
    std::fs::write(path, csv).map_err(|e| Error::io(path, e))
}
