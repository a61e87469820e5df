use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::caption::{caption, encode_caption, ConditionVector};
use super::image::Image;
use super::params::{sample_params, Label};
use super::render::{render_lesion, SUPPORTED_RESOLUTIONS};
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, Rng, Tensor};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

const SPLIT_STREAM: u64 = 0x0053_504C_4954;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_per_class: usize,
    pub resolutions: Vec<usize>,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_per_class: 500,
            resolutions: vec![16],
            test_fraction: 0.2,
            seed: 1,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class < 2 {
            return Err(Error::Config(format!(
                "n_per_class must be at least 2, got {}",
                self.n_per_class
            )));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.resolutions.is_empty() {
            return Err(Error::Config("at least one resolution is required".into()));
        }
        for r in &self.resolutions {
            if !SUPPORTED_RESOLUTIONS.contains(r) {
                return Err(Error::Config(format!(
                    "unsupported resolution {r}; expected one of {SUPPORTED_RESOLUTIONS:?}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub image_path: String,
    pub resolution: usize,
    pub label: Label,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub caption: String,
    pub split: Split,
}

/// Dataset index. Image paths are relative to `root`.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

/// Creates `dir` if needed. The parent must already exist.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    if dir.is_dir() {
        return Ok(());
    }
    fs::create_dir(dir).map_err(|e| Error::io(dir, e))
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ManifestRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
                field: "manifest",
                detail: format!("line {}: {e}", lineno + 1),
            })?;
            records.push(record);
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Manifest { root, records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r).expect("manifest records serialize");
            out.push(b'\n');
        }
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&out).map_err(|e| Error::io(path, e))
    }

    pub fn select(&self, split: Split, resolution: usize, label: Option<Label>) -> Vec<&ManifestRecord> {
        self.records
            .iter()
            .filter(|r| r.split == split && r.resolution == resolution)
            .filter(|r| label.is_none_or(|l| r.label == l))
            .collect()
    }

    pub fn image_path(&self, record: &ManifestRecord) -> PathBuf {
        self.root.join(&record.image_path)
    }

    pub fn load_image(&self, record: &ManifestRecord) -> Result<Image> {
        Image::read_ppm(&self.image_path(record))
    }

    /// Normalized pixels of `records` as the rows of an `[n × D]` matrix.
    pub fn load_pixels(&self, records: &[&ManifestRecord]) -> Result<Tensor> {
        let rows = records
            .iter()
            .map(|r| self.load_image(r).map(|img| img.to_normalized()))
            .collect::<Result<Vec<_>>>()?;
        Tensor::stack_rows(&rows)
    }

    pub fn load_conditions(records: &[&ManifestRecord]) -> Result<Vec<ConditionVector>> {
        records.iter().map(|r| encode_caption(&r.caption)).collect()
    }

    pub fn count(&self, split: Split, resolution: usize, label: Label) -> usize {
        self.select(split, resolution, Some(label)).len()
    }

    /// Checks that ids are unique, images exist and no id is in both splits.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Data(format!("duplicate manifest id {}", r.id)));
            }
            if !self.image_path(r).is_file() {
                return Err(Error::Data(format!("missing image {}", r.image_path)));
            }
        }
        Ok(())
    }
}

/// Indices (per class) that go to the test split.
fn test_indices(config: &DatasetConfig, resolution: usize, label: Label) -> Vec<bool> {
    let n = config.n_per_class;
    let n_test = ((n as f64 * config.test_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    let seed = derive_seed(&[config.seed, resolution as u64, label.bit() as u64, SPLIT_STREAM]);
    Rng::new(seed).shuffle(&mut order);
    let mut is_test = vec![false; n];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    is_test
}

/// Renders `n_per_class` lesions per class and resolution into `out_dir`,
/// writing PPM images plus a `manifest.jsonl` index.
pub fn build_dataset(config: &DatasetConfig, out_dir: &Path) -> Result<Manifest> {
    config.validate()?;
    ensure_dir(out_dir)?;
    let images_dir = out_dir.join("images");
    ensure_dir(&images_dir)?;

    let mut jobs = Vec::new();
    for &res in &config.resolutions {
        let res_dir = images_dir.join(format!("r{res}"));
        ensure_dir(&res_dir)?;
        for label in Label::ALL {
            let is_test = test_indices(config, res, label);
            for (i, test) in is_test.into_iter().enumerate() {
                jobs.push((res, label, i, test));
            }
        }
    }

    let records = jobs
        .par_iter()
        .map(|&(res, label, i, test)| {
            let seed = derive_seed(&[config.seed, res as u64, label.bit() as u64, i as u64]);
            let params = sample_params(label, &mut Rng::new(seed));
            let image = render_lesion(&params, res)?;
            let rel = format!("images/r{res}/{label}_{i:05}.ppm");
            image.write_ppm(&out_dir.join(&rel))?;
            Ok(ManifestRecord {
                id: format!("r{res}-{label}-{i:05}"),
                image_path: rel,
                resolution: res,
                label,
                a: params.asymmetry,
                b: params.border_irregularity,
                c: params.color_variation,
                caption: caption(&params).text,
                split: if test { Split::Test } else { Split::Train },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest {
        root: out_dir.to_path_buf(),
        records,
    };
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
