use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classifier::{train_classifier, ClassifierConfig};
use super::metrics::{accuracy, roc_auc, roc_curve};
use crate::error::{Error, Result};
use crate::lesiondata::{caption, encode_caption, sample_params, Image, Label, Manifest, Split, CONDITION_DIM};
use crate::numerics::{derive_seed, fnv1a64, Rng, Tensor};
use crate::sampler::{generate_batch, sample_noise, Integrator};
use crate::trainer::Checkpoint;

const POOL_PARAMS_STREAM: u64 = 0x900b;
const POOL_NOISE_STREAM: u64 = 0x900c;
const REAL_STREAM: u64 = 0x4ea1;
const SYNTH_STREAM: u64 = 0x5e7;
const CLASSIFIER_STREAM: u64 = 0xc1f;

/// Paper counts divided by this give the desk counts.
pub const DESK_SCALE: u32 = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub resolution: usize,
    pub seeds: Vec<u64>,
    /// Real training images, both classes together.
    pub real_counts: Vec<usize>,
    /// Synthetic images added per real image.
    pub ratios: Vec<f64>,
    /// Adds a 0:1 run per real count, with that many synthetic images.
    pub pure_synthetic: bool,
    pub pool_per_class: usize,
    pub pool_seed: u64,
    pub synthetic_only_count: usize,
    pub mixed_real_count: usize,
    pub mixed_synthetic_count: usize,
    pub steps: usize,
    pub integrator: Integrator,
    pub classifier: ClassifierConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            resolution: 16,
            seeds: vec![1, 2, 3, 4, 5],
            real_counts: vec![250, 500],
            ratios: vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.75],
            pure_synthetic: true,
            pool_per_class: 437,
            pool_seed: 1,
            synthetic_only_count: 600,
            mixed_real_count: 250,
            mixed_synthetic_count: 500,
            steps: 20,
            integrator: Integrator::Euler,
            classifier: ClassifierConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("eval.seeds is empty".into()));
        }
        if let Some(x) = self.ratios.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::Config(format!("eval.ratios entry {x} must be a finite x ≥ 0")));
        }
        if self.real_counts.iter().any(|&r| r < 2) {
            return Err(Error::Config("eval.real_counts entries must be at least 2".into()));
        }
        if self.steps == 0 {
            return Err(Error::Config("eval.steps must be at least 1".into()));
        }
        self.classifier.validate()
    }

    pub fn scenario_specs(&self) -> [(String, RatioSpec); 2] {
        [
            ("(i)".into(), RatioSpec::pure(self.synthetic_only_count)),
            (
                "(ii)".into(),
                RatioSpec::mixed(
                    self.mixed_real_count,
                    self.mixed_synthetic_count as f64 / self.mixed_real_count as f64,
                ),
            ),
        ]
    }

    pub fn sweep_specs(&self) -> Vec<(String, RatioSpec)> {
        let mut out = Vec::new();
        for &r in &self.real_counts {
            for &x in &self.ratios {
                out.push((format!("1:{x}"), RatioSpec::mixed(r, x)));
            }
            if self.pure_synthetic {
                out.push(("0:1".to_string(), RatioSpec::pure(r)));
            }
        }
        out
    }
}

/// A training-set composition. `real_count` counts both classes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioSpec {
    pub real_count: usize,
    pub x: f64,
    pub pure_synthetic: bool,
}

impl RatioSpec {
    pub fn mixed(real_count: usize, x: f64) -> Self {
        RatioSpec {
            real_count,
            x,
            pure_synthetic: false,
        }
    }

    /// `count` synthetic images and no real ones.
    pub fn pure(count: usize) -> Self {
        RatioSpec {
            real_count: count,
            x: 1.0,
            pure_synthetic: true,
        }
    }

    pub fn real_per_class(&self) -> usize {
        if self.pure_synthetic {
            0
        } else {
            self.real_count / 2
        }
    }

    /// `⌊(real_count / 2) · x⌋`, or `real_count / 2` for pure synthetic runs.
    pub fn synthetic_per_class(&self) -> usize {
        if self.pure_synthetic {
            self.real_count / 2
        } else {
            ((self.real_count / 2) as f64 * self.x).floor() as usize
        }
    }
}

/// Images of one or both classes with their ids.
#[derive(Clone, Debug)]
pub struct Samples {
    pub ids: Vec<String>,
    pub pixels: Tensor,
    pub labels: Vec<bool>,
}

impl Samples {
    fn from_rows(dim: usize, rows: Vec<(String, Vec<f64>, bool)>) -> Result<Self> {
        let n = rows.len();
        let mut ids = Vec::with_capacity(n);
        let mut pixels = Vec::with_capacity(n * dim);
        let mut labels = Vec::with_capacity(n);
        for (id, px, l) in rows {
            ids.push(id);
            pixels.extend(px);
            labels.push(l);
        }
        Ok(Samples {
            ids,
            pixels: Tensor::new(vec![n, dim], pixels)?,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn dim(&self) -> usize {
        self.pixels.shape()[1]
    }

    fn row(&self, i: usize) -> (String, Vec<f64>, bool) {
        (self.ids[i].clone(), self.pixels.row(i).to_vec(), self.labels[i])
    }

    /// FNV-1a over ids, labels and pixel bytes.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::new();
        for (i, id) in self.ids.iter().enumerate() {
            bytes.extend_from_slice(id.as_bytes());
            bytes.push(b'\n');
            bytes.push(self.labels[i] as u8);
        }
        for v in self.pixels.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        format!("{:016x}", fnv1a64(&bytes))
    }
}

/// Real train pools per class, the held-out test split and the synthetic
/// pools per class, shared by every run of an evaluation.
#[derive(Clone, Debug)]
pub struct EvalData {
    pub real: [Samples; 2],
    pub test: Samples,
    pub synthetic: [Samples; 2],
}

fn load_split(manifest: &Manifest, split: Split, resolution: usize, label: Option<Label>) -> Result<Samples> {
    let records = manifest.select(split, resolution, label);
    let pixels = manifest.load_pixels(&records)?;
    Ok(Samples {
        ids: records.iter().map(|r| r.id.clone()).collect(),
        labels: records.iter().map(|r| r.label == Label::Malignant).collect(),
        pixels,
    })
}

/// Draws `per_class` synthetic images per class from `checkpoint`. Each image
/// gets fresh ABC attributes for its class, captioned and encoded as the
/// condition.
pub fn synthesize_pool(checkpoint: &Checkpoint, per_class: usize, seed: u64, steps: usize, integrator: Integrator) -> Result<[Samples; 2]> {
    let net = checkpoint.net.merged()?;
    let res = net.config.resolution.ok_or_else(|| Error::Compatibility {
        field: "resolution".into(),
        expected: "an image resolution".into(),
        found: "none".into(),
    })?;
    let d = net.data_dim();
    let mut pools = Vec::with_capacity(2);
    for label in Label::ALL {
        let bit = label.bit() as u64;
        let mut conds = Vec::with_capacity(per_class * CONDITION_DIM);
        let mut noise = Vec::with_capacity(per_class * d);
        for i in 0..per_class {
            let mut rng = Rng::new(derive_seed(&[seed, POOL_PARAMS_STREAM, bit, i as u64]));
            let params = sample_params(label, &mut rng);
            conds.extend_from_slice(encode_caption(&caption(&params).text)?.values());
            noise.extend(sample_noise(derive_seed(&[seed, POOL_NOISE_STREAM, bit]), i, d));
        }
        let conds = Tensor::new(vec![per_class, CONDITION_DIM], conds)?;
        let noise = Tensor::new(vec![per_class, d], noise)?;
        let (finals, _) = generate_batch(&net, &conds, &noise, steps, integrator, false)?;
        let rows = (0..per_class)
            .map(|i| {
                // Quantize exactly as a written sample would be.
                let px = Image::from_normalized(finals.row(i), res, res)?.to_normalized().into_vec();
                Ok((format!("syn-{label}-{i:05}"), px, label == Label::Malignant))
            })
            .collect::<Result<Vec<_>>>()?;
        pools.push(Samples::from_rows(d, rows)?);
    }
    let malignant = pools.pop().expect("two pools");
    let benign = pools.pop().expect("two pools");
    Ok([benign, malignant])
}

impl EvalData {
    pub fn prepare(manifest: &Manifest, checkpoint: &Checkpoint, config: &EvalConfig) -> Result<Self> {
        config.validate()?;
        let found = checkpoint.net.config.resolution;
        if found != Some(config.resolution) {
            return Err(Error::Compatibility {
                field: "resolution".into(),
                expected: config.resolution.to_string(),
                found: format!("{found:?}"),
            });
        }
        let real = [
            load_split(manifest, Split::Train, config.resolution, Some(Label::Benign))?,
            load_split(manifest, Split::Train, config.resolution, Some(Label::Malignant))?,
        ];
        let test = load_split(manifest, Split::Test, config.resolution, None)?;
        if test.labels.iter().all(|&l| l) || test.labels.iter().all(|&l| !l) {
            return Err(Error::Data("test split needs both classes".into()));
        }
        let synthetic = synthesize_pool(checkpoint, config.pool_per_class, config.pool_seed, config.steps, config.integrator)?;
        Ok(EvalData { real, test, synthetic })
    }

    /// Errors unless every spec fits in the available pools.
    pub fn check_capacity(&self, specs: &[(String, RatioSpec)]) -> Result<()> {
        for (name, spec) in specs {
            for (c, label) in Label::ALL.iter().enumerate() {
                let need = spec.real_per_class();
                let have = self.real[c].len();
                if need > have {
                    return Err(Error::Data(format!(
                        "insufficient real data for {name}: need {need} {label} training images per class, have {have}"
                    )));
                }
                let need = spec.synthetic_per_class();
                let have = self.synthetic[c].len();
                if need > have {
                    return Err(Error::Config(format!(
                        "synthetic pool too small for {name}: need {need} {label} images, pool has {have}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One trained classifier evaluated on the test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub accuracy: f64,
    pub auc: f64,
    pub real_per_class: usize,
    pub synthetic_per_class: usize,
    pub train_fingerprint: String,
    pub train_ids: usize,
    /// Size of the intersection of training and test ids; always 0.
    pub leaked_ids: usize,
    #[serde(skip)]
    pub roc: Vec<(f64, f64)>,
    #[serde(skip)]
    pub train_id_list: Vec<String>,
}

fn first_of_shuffle(n: usize, take: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut idx);
    idx.truncate(take);
    idx
}

/// Trains and scores one classifier. Real subsets depend on `(seed, real
/// count)`, synthetic subsets on `seed` only, so larger `x` extends smaller.
pub fn run_one(data: &EvalData, spec: &RatioSpec, seed: u64, config: &ClassifierConfig) -> Result<RunRecord> {
    let dim = data.test.dim();
    let mut rows = Vec::new();
    for (c, label) in Label::ALL.iter().enumerate() {
        let bit = label.bit() as u64;
        let real = &data.real[c];
        let pick = first_of_shuffle(real.len(), spec.real_per_class(), derive_seed(&[seed, REAL_STREAM, spec.real_count as u64, bit]));
        rows.extend(pick.into_iter().map(|i| real.row(i)));
        let syn = &data.synthetic[c];
        let pick = first_of_shuffle(syn.len(), spec.synthetic_per_class(), derive_seed(&[seed, SYNTH_STREAM, bit]));
        rows.extend(pick.into_iter().map(|i| syn.row(i)));
    }
    let train = Samples::from_rows(dim, rows)?;

    let test_ids: HashSet<&str> = data.test.ids.iter().map(String::as_str).collect();
    let leaked = train.ids.iter().filter(|id| test_ids.contains(id.as_str())).count();
    if leaked > 0 {
        return Err(Error::Contract(format!("{leaked} test ids found in a training set")));
    }

    let clf = train_classifier(&train.pixels, &train.labels, config, derive_seed(&[seed, CLASSIFIER_STREAM]))?;
    let scores = clf.scores(&data.test.pixels)?;
    Ok(RunRecord {
        seed,
        accuracy: accuracy(&scores, &data.test.labels)?,
        auc: roc_auc(&scores, &data.test.labels)?,
        real_per_class: spec.real_per_class(),
        synthetic_per_class: spec.synthetic_per_class(),
        train_fingerprint: train.fingerprint(),
        train_ids: train.len(),
        leaked_ids: leaked,
        roc: roc_curve(&scores, &data.test.labels)?,
        train_id_list: train.ids,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fingerprints {
    pub test: String,
    pub real_benign: String,
    pub real_malignant: String,
    pub synthetic_benign: String,
    pub synthetic_malignant: String,
}

impl Fingerprints {
    pub fn of(data: &EvalData) -> Self {
        Fingerprints {
            test: data.test.fingerprint(),
            real_benign: data.real[0].fingerprint(),
            real_malignant: data.real[1].fingerprint(),
            synthetic_benign: data.synthetic[0].fingerprint(),
            synthetic_malignant: data.synthetic[1].fingerprint(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: String,
    pub ratio: RatioSpec,
    pub seeds: Vec<u64>,
    pub accuracy_mean: f64,
    pub accuracy_sd: f64,
    pub auc_mean: f64,
    pub auc_sd: f64,
    pub runs: Vec<RunRecord>,
    pub fingerprints: Fingerprints,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every `(spec, seed)` cell, in parallel, and aggregates per spec in
/// input order.
pub fn run_specs(data: &EvalData, specs: &[(String, RatioSpec)], config: &EvalConfig) -> Result<Vec<EvalReport>> {
    data.check_capacity(specs)?;
    let jobs: Vec<(usize, u64)> = (0..specs.len())
        .flat_map(|s| config.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(s, seed)| run_one(data, &specs[s].1, seed, &config.classifier))
        .collect::<Result<Vec<_>>>()?;
    let fingerprints = Fingerprints::of(data);
    let mut runs = runs.into_iter();
    Ok(specs
        .iter()
        .map(|(name, spec)| {
            let runs: Vec<RunRecord> = runs.by_ref().take(config.seeds.len()).collect();
            let (accuracy_mean, accuracy_sd) = mean_sd(&runs.iter().map(|r| r.accuracy).collect::<Vec<_>>());
            let (auc_mean, auc_sd) = mean_sd(&runs.iter().map(|r| r.auc).collect::<Vec<_>>());
            EvalReport {
                scenario: name.clone(),
                ratio: *spec,
                seeds: config.seeds.clone(),
                accuracy_mean,
                accuracy_sd,
                auc_mean,
                auc_sd,
                runs,
                fingerprints: fingerprints.clone(),
            }
        })
        .collect())
}

/// Scenario (i), synthetic only, and (ii), real plus synthetic, both scored
/// on the same held-out test split.
pub fn run_scenarios(manifest: &Manifest, checkpoint: &Checkpoint, config: &EvalConfig) -> Result<(EvalReport, EvalReport)> {
    let data = EvalData::prepare(manifest, checkpoint, config)?;
    let mut reports = run_specs(&data, &config.scenario_specs(), config)?.into_iter();
    let first = reports.next().expect("two scenarios");
    let second = reports.next().expect("two scenarios");
    Ok((first, second))
}

/// Every `1:x` ratio per real count, plus the `0:1` runs.
pub fn run_ratio_sweep(manifest: &Manifest, checkpoint: &Checkpoint, config: &EvalConfig) -> Result<Vec<EvalReport>> {
    let data = EvalData::prepare(manifest, checkpoint, config)?;
    run_specs(&data, &config.sweep_specs(), config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_arithmetic() {
        let r = RatioSpec::mixed(250, 1.0);
        assert_eq!((r.real_per_class(), r.synthetic_per_class()), (125, 125));
        assert_eq!(RatioSpec::mixed(500, 1.75).synthetic_per_class(), 437);
        assert_eq!(RatioSpec::mixed(250, 0.25).synthetic_per_class(), 31);
        assert_eq!(RatioSpec::mixed(500, 0.0).synthetic_per_class(), 0);
        let p = RatioSpec::pure(600);
        assert_eq!((p.real_per_class(), p.synthetic_per_class()), (0, 300));
    }

    #[test]
    fn default_grid_and_scenarios() {
        let config = EvalConfig::default();
        let specs = config.sweep_specs();
        assert_eq!(specs.len(), 2 * (6 + 1));
        assert_eq!(specs.iter().filter(|(n, _)| n != "0:1").count() * config.seeds.len(), 2 * 6 * 5);
        let [(_, i), (_, ii)] = config.scenario_specs();
        assert_eq!((i.real_per_class(), i.synthetic_per_class()), (0, 300));
        assert_eq!((ii.real_per_class(), ii.synthetic_per_class()), (125, 250));
    }

    #[test]
    fn mean_and_sd() {
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        assert_eq!(mean_sd(&[4.0]), (4.0, 0.0));
    }
}
