//! Versioned little-endian checkpoint format.
//!
//! ```text
//! "RFLW" | version u32 | descriptor length u32 | descriptor JSON
//!        | base count u64 | base f64 × count
//!        | adapter count u64 | adapter f64 × count
//!        | FNV-1a u64 over the base and adapter float bytes
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::flowmodel::{LinearLayer, LoraAdapter, LoraConfig, NetConfig, ParamGroup, VelocityFieldNet, LAYER_NAMES, TIME_FEATURES};
use crate::lesiondata::CONDITION_DIM;
use crate::numerics::{fnv1a64, Tensor};

pub const MAGIC: &[u8; 4] = b"RFLW";
pub const FORMAT_VERSION: u32 = 1;
pub const SUPPORTED_VERSIONS: [u32; 1] = [FORMAT_VERSION];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub out_dim: usize,
    pub in_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub data_dim: usize,
    pub hidden: usize,
    pub resolution: Option<usize>,
    pub time_features: usize,
    pub condition_dim: usize,
    pub layers: Vec<LayerShape>,
}

impl Architecture {
    pub fn of(net: &VelocityFieldNet) -> Self {
        Architecture {
            data_dim: net.config.data_dim,
            hidden: net.config.hidden,
            resolution: net.config.resolution,
            time_features: TIME_FEATURES,
            condition_dim: CONDITION_DIM,
            layers: net
                .layers
                .iter()
                .zip(LAYER_NAMES)
                .map(|(l, name)| LayerShape {
                    name: name.to_string(),
                    out_dim: l.out_dim(),
                    in_dim: l.in_dim(),
                })
                .collect(),
        }
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            data_dim: self.data_dim,
            hidden: self.hidden,
            resolution: self.resolution,
        }
    }

    /// Errors naming the first field that differs from `expected`.
    pub fn ensure_matches(&self, expected: &Architecture) -> Result<()> {
        let fields: [(&str, String, String); 5] = [
            ("data_dim", expected.data_dim.to_string(), self.data_dim.to_string()),
            ("hidden", expected.hidden.to_string(), self.hidden.to_string()),
            ("resolution", format!("{:?}", expected.resolution), format!("{:?}", self.resolution)),
            ("time_features", expected.time_features.to_string(), self.time_features.to_string()),
            ("condition_dim", expected.condition_dim.to_string(), self.condition_dim.to_string()),
        ];
        for (field, want, got) in fields {
            if want != got {
                return Err(Error::Compatibility {
                    field: field.to_string(),
                    expected: want,
                    found: got,
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub config: TrainConfig,
    pub final_loss: Option<f64>,
    pub seed: u64,
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Descriptor {
    architecture: Architecture,
    lora: Option<LoraConfig>,
    metadata: TrainingMetadata,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub net: VelocityFieldNet,
    pub lora: Option<LoraConfig>,
    pub metadata: TrainingMetadata,
}

fn float_bytes(tensors: &[&Tensor]) -> Vec<u8> {
    let n: usize = tensors.iter().map(|t| t.numel()).sum();
    let mut out = Vec::with_capacity(n * 8);
    for t in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Format {
            field: "checksum",
            detail: format!("file truncated at byte {} (needed {n} more)", self.pos),
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    /// A count-prefixed float block, returned as raw bytes.
    fn block(&mut self) -> Result<&'a [u8]> {
        let count = self.u64()? as usize;
        self.take(count.checked_mul(8).ok_or_else(|| Error::Format {
            field: "parameter count",
            detail: format!("count {count} overflows"),
        })?)
    }
}

fn floats(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect()
}

fn fill(targets: Vec<&mut Tensor>, values: &[f64], field: &'static str) -> Result<()> {
    let expected: usize = targets.iter().map(|t| t.numel()).sum();
    if expected != values.len() {
        return Err(Error::Format {
            field,
            detail: format!("architecture needs {expected} values, block has {}", values.len()),
        });
    }
    let mut offset = 0;
    for t in targets {
        let n = t.numel();
        t.data_mut().copy_from_slice(&values[offset..offset + n]);
        offset += n;
    }
    Ok(())
}

impl Checkpoint {
    pub fn architecture(&self) -> Architecture {
        Architecture::of(&self.net)
    }

    /// Raw bytes of the base parameter block.
    pub fn base_block(&self) -> Vec<u8> {
        float_bytes(&self.net.parameters(ParamGroup::Base))
    }

    pub fn adapter_block(&self) -> Vec<u8> {
        float_bytes(&self.net.parameters(ParamGroup::Adapter))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let descriptor = Descriptor {
            architecture: self.architecture(),
            lora: self.lora.clone(),
            metadata: self.metadata.clone(),
        };
        let json = serde_json::to_vec(&descriptor).expect("descriptor serializes");
        let base = self.base_block();
        let adapter = self.adapter_block();

        let mut out = Vec::with_capacity(32 + json.len() + base.len() + adapter.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&((base.len() / 8) as u64).to_le_bytes());
        out.extend_from_slice(&base);
        out.extend_from_slice(&((adapter.len() / 8) as u64).to_le_bytes());
        out.extend_from_slice(&adapter);
        let mut hashed = base;
        hashed.extend_from_slice(&adapter);
        out.extend_from_slice(&fnv1a64(&hashed).to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4).map_err(|_| Error::Format {
            field: "magic",
            detail: "file shorter than the magic number".into(),
        })?;
        if magic != MAGIC {
            return Err(Error::Format {
                field: "magic",
                detail: format!("expected \"RFLW\", found {:?}", String::from_utf8_lossy(magic)),
            });
        }
        let version = r.u32()?;
        if !SUPPORTED_VERSIONS.contains(&version) {
            return Err(Error::Format {
                field: "version",
                detail: format!("unsupported version {version}; supported versions: {SUPPORTED_VERSIONS:?}"),
            });
        }
        let json_len = r.u32()? as usize;
        let json = r.take(json_len)?;
        let base = r.block()?;
        let adapter = r.block()?;
        let stored = r.u64()?;
        if r.pos != bytes.len() {
            return Err(Error::Format {
                field: "checksum",
                detail: format!("{} trailing bytes after checksum", bytes.len() - r.pos),
            });
        }
        let mut hashed = base.to_vec();
        hashed.extend_from_slice(adapter);
        let actual = fnv1a64(&hashed);
        if actual != stored {
            return Err(Error::Format {
                field: "checksum",
                detail: format!("stored {stored:#018x}, computed {actual:#018x}"),
            });
        }

        let descriptor: Descriptor = serde_json::from_slice(json).map_err(|e| Error::Format {
            field: "descriptor",
            detail: e.to_string(),
        })?;
        let arch = descriptor.architecture;
        let mut net = VelocityFieldNet::zeros(arch.net_config());
        arch.ensure_matches(&Architecture::of(&net))?;
        fill(net.parameters_mut(ParamGroup::Base), &floats(base), "base block")?;

        if let Some(lora) = &descriptor.lora {
            for (layer, enabled) in net.layers.iter_mut().zip(lora.enabled()) {
                layer.frozen = true;
                if enabled {
                    attach_empty(layer, lora)?;
                }
            }
        }
        fill(net.parameters_mut(ParamGroup::Adapter), &floats(adapter), "adapter block")?;

        Ok(Checkpoint {
            net,
            lora: descriptor.lora,
            metadata: descriptor.metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

fn attach_empty(layer: &mut LinearLayer, lora: &LoraConfig) -> Result<()> {
    let (d, k) = (layer.out_dim(), layer.in_dim());
    if lora.rank == 0 || lora.rank > d.min(k) {
        return Err(Error::Format {
            field: "descriptor",
            detail: format!("adapter rank {} invalid for a {d}x{k} layer", lora.rank),
        });
    }
    layer.adapter = Some(LoraAdapter {
        a: Tensor::zeros(&[lora.rank, k]),
        b: Tensor::zeros(&[d, lora.rank]),
        rank: lora.rank,
        alpha: lora.alpha,
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn sample() -> Checkpoint {
        let config = NetConfig {
            data_dim: 12,
            hidden: 6,
            resolution: Some(2),
        };
        let mut rng = Rng::new(3);
        let mut net = VelocityFieldNet::init(config, &mut rng);
        let lora = LoraConfig {
            rank: 2,
            alpha: 2.0,
            hidden2: false,
            ..LoraConfig::default()
        };
        net.attach_lora(&lora, &mut rng).unwrap();
        for p in net.parameters_mut(ParamGroup::Adapter) {
            *p = rng.gaussian(p.shape());
        }
        Checkpoint {
            net,
            lora: Some(lora),
            metadata: TrainingMetadata {
                config: TrainConfig::default(),
                final_loss: Some(0.25),
                seed: 3,
                steps: 10,
            },
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), ck.to_bytes());
        assert_eq!(&ck.to_bytes()[..4], b"RFLW");
    }

    #[test]
    fn truncation_is_checksum_error() {
        let bytes = sample().to_bytes();
        for cut in [bytes.len() - 1, bytes.len() - 9, bytes.len() / 2, 10] {
            match Checkpoint::from_bytes(&bytes[..cut]) {
                Err(Error::Format { field: "checksum", .. }) => {}
                other => panic!("cut at {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn corrupted_parameter_is_checksum_error() {
        let mut bytes = sample().to_bytes();
        let n = bytes.len();
        bytes[n - 20] ^= 1;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Format { field: "checksum", .. })
        ));
    }

    #[test]
    fn bumped_version_names_supported_versions() {
        let mut bytes = sample().to_bytes();
        bytes[4] = 2;
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::Format { field: "version", .. }));
        assert!(err.to_string().contains("[1]"), "{err}");
    }

    #[test]
    fn bad_magic() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Format { field: "magic", .. })
        ));
    }

    #[test]
    fn mismatched_architecture_names_field() {
        let a = Architecture::of(&sample().net);
        let mut b = a.clone();
        b.hidden = 7;
        match a.ensure_matches(&b) {
            Err(Error::Compatibility { field, .. }) => assert_eq!(field, "hidden"),
            other => panic!("{other:?}"),
        }
    }
}
