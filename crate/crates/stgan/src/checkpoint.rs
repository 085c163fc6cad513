//! Parameter checkpoints: a JSON manifest of names, shapes and byte offsets
//! next to a flat little-endian `f64` payload, plus the training log.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use stgan_core::eval::ModelKind;
use stgan_core::gan::{EpochLoss, GanConfig, GanModel};
use stgan_core::neural::{ParamSet, Tensor};

use crate::error::{Error, Result};
use crate::formats::{read_json, write_json};

pub const MANIFEST_FORMAT: &str = "stgan-params-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: usize,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub payload: String,
    pub payload_bytes: usize,
    pub entries: Vec<ManifestEntry>,
}

/// Manifest and payload for parameter sets, each name prefixed with its
/// set's label.
pub fn encode(sets: &[(&str, &ParamSet)], payload_name: &str) -> (Manifest, Vec<u8>) {
    let mut bytes = Vec::new();
    let mut entries = Vec::new();
    for (label, set) in sets {
        for p in set.iter() {
            entries.push(ManifestEntry {
                name: format!("{label}/{}", p.name),
                shape: p.value.shape().to_vec(),
                offset: bytes.len(),
                trainable: p.trainable,
            });
            for v in p.value.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        payload: payload_name.into(),
        payload_bytes: bytes.len(),
        entries,
    };
    (manifest, bytes)
}

/// Overwrites every parameter of `set` from the entry with the same label
/// and name. Shapes must match exactly.
pub fn decode_into(manifest: &Manifest, payload: &[u8], label: &str, set: &mut ParamSet) -> Result<(), String> {
    if manifest.format != MANIFEST_FORMAT {
        return Err(format!("unknown manifest format {:?}", manifest.format));
    }
    if payload.len() != manifest.payload_bytes {
        return Err(format!("payload has {} bytes, manifest says {}", payload.len(), manifest.payload_bytes));
    }
    for param in set.iter_mut() {
        let full = format!("{label}/{}", param.name);
        let entry = manifest
            .entries
            .iter()
            .find(|e| e.name == full)
            .ok_or_else(|| format!("checkpoint lacks {full}"))?;
        let expected = param.value.shape().to_vec();
        if entry.shape != expected {
            return Err(format!("{full}: shape {:?}, model expects {expected:?}", entry.shape));
        }
        let n: usize = expected.iter().product();
        let end = entry.offset + 8 * n;
        let raw = payload
            .get(entry.offset..end)
            .ok_or_else(|| format!("{full}: bytes {}..{end} outside the payload", entry.offset))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        param.value = Tensor::new(&expected, data).map_err(|e| e.to_string())?;
    }
    Ok(())
}

/// Model metadata stored next to the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCard {
    pub model: ModelKind,
    pub epoch: usize,
    pub config: GanConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub model: ModelKind,
    pub seed: u64,
    pub config_hash: String,
    pub epochs: Vec<EpochLoss>,
}

/// Files of one model checkpoint directory.
#[derive(Debug, Clone)]
pub struct CheckpointDir {
    pub root: PathBuf,
}

impl CheckpointDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn payload(&self) -> PathBuf {
        self.root.join("params.bin")
    }

    pub fn card(&self) -> PathBuf {
        self.root.join("model.json")
    }

    pub fn log(&self) -> PathBuf {
        self.root.join("training_log.json")
    }

    pub fn save(&self, kind: ModelKind, model: &GanModel) -> Result<()> {
        let (manifest, bytes) = encode(
            &[("generator", &model.generator), ("discriminator", &model.discriminator)],
            "params.bin",
        );
        fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let payload = self.payload();
        let mut f = fs::File::create(&payload).map_err(|e| Error::io(&payload, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&payload, e))?;
        write_json(&self.manifest(), &manifest)?;
        write_json(
            &self.card(),
            &ModelCard {
                model: kind,
                epoch: model.epoch,
                config: model.config.clone(),
            },
        )
    }

    pub fn load(&self) -> Result<(ModelCard, GanModel)> {
        let card: ModelCard = read_json(&self.card())?;
        let manifest: Manifest = read_json(&self.manifest())?;
        let payload_path = self.root.join(&manifest.payload);
        let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
        let mut model = GanModel::new(card.config.clone(), &vec![0.0; card.config.latent_dim])?;
        decode_into(&manifest, &bytes, "generator", &mut model.generator).map_err(|m| Error::format(&payload_path, m))?;
        decode_into(&manifest, &bytes, "discriminator", &mut model.discriminator)
            .map_err(|m| Error::format(&payload_path, m))?;
        model.epoch = card.epoch;
        Ok((card, model))
    }

    pub fn save_log(&self, log: &TrainingLog) -> Result<()> {
        write_json(&self.log(), log)
    }

    pub fn load_log(&self) -> Result<TrainingLog> {
        read_json(&self.log())
    }
}
