//! Checkpoints: a JSON manifest next to a little-endian `f32` blob.
//!
//! `save("ck/pre.ckpt")` writes the manifest to `ck/pre.ckpt` and the blob
//! to `ck/pre.ckpt.bin`. The blob holds the network tensors followed by the
//! Adam first and second moments, each listed in `layers` with its offset
//! and length in elements.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adam::{AdamHyper, AdamState};
use crate::arch::{Activation, Architecture, ModelKind, Q_NETWORK_PARAMS};
use crate::error::{NetError, Result};
use crate::network::Network;

pub const FORMAT: &str = "sketchnet-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fc1_activation: Option<Activation>,
    #[serde(default)]
    pub categories: Vec<String>,
    pub layers: Vec<LayerEntry>,
    pub total_params: usize,
    pub step: u64,
    pub rng: serde_json::Value,
    pub adam: AdamManifest,
    pub blob: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamManifest {
    pub t: u64,
    #[serde(flatten)]
    pub hyper: AdamHyper,
}

/// Training metadata stored alongside the parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointMeta {
    pub step: u64,
    /// Opaque generator state owned by the caller.
    pub rng: serde_json::Value,
    /// Category roster, in output order (classifiers only).
    pub categories: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub network: Network<f32>,
    pub adam: AdamState<f32>,
    pub meta: CheckpointMeta,
}

fn blob_path(manifest_path: &Path) -> (PathBuf, String) {
    let file = manifest_path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".into());
    let name = format!("{file}.bin");
    (manifest_path.with_file_name(&name), name)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn architecture_for(kind: ModelKind, fc1: Option<Activation>, categories: usize) -> Result<Architecture> {
    match kind {
        ModelKind::QNetwork => Ok(Architecture::q_network(fc1.unwrap_or(Activation::Linear))),
        ModelKind::Classifier => {
            if categories < 2 {
                return Err(NetError::CheckpointCorrupt(format!(
                    "classifier manifest lists {categories} categories"
                )));
            }
            Ok(Architecture::classifier(categories))
        }
    }
}

fn expected_layers(arch: &Architecture) -> Vec<LayerEntry> {
    let shapes = arch.tensor_shapes();
    let mut entries = Vec::with_capacity(shapes.len() * 3);
    let mut offset = 0;
    for prefix in ["", "adam.m/", "adam.v/"] {
        for s in &shapes {
            entries.push(LayerEntry {
                name: format!("{prefix}{}", s.name),
                shape: s.shape.clone(),
                offset,
                len: s.len(),
            });
            offset += s.len();
        }
    }
    entries
}

impl Checkpoint {
    pub fn new(network: Network<f32>, adam: AdamState<f32>, meta: CheckpointMeta) -> Self {
        Self { network, adam, meta }
    }

    /// Fresh optimizer state for `network`.
    pub fn from_network(network: Network<f32>, meta: CheckpointMeta) -> Self {
        let adam = AdamState::new(&network, AdamHyper::default());
        Self { network, adam, meta }
    }

    pub fn kind(&self) -> ModelKind {
        self.network.architecture().kind
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let arch = self.network.architecture();
        let layers = expected_layers(arch);
        let total_len = layers.last().map_or(0, |l| l.offset + l.len);
        let mut blob = Vec::with_capacity(total_len * 4);
        for tensor in self
            .network
            .tensors()
            .iter()
            .chain(&self.adam.m)
            .chain(&self.adam.v)
        {
            for v in tensor {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        debug_assert_eq!(blob.len(), total_len * 4);
        let (blob_file, blob_name) = blob_path(path);
        let fc1_activation = match arch.kind {
            ModelKind::QNetwork => arch.head.first().map(|d| d.activation),
            ModelKind::Classifier => None,
        };
        let manifest = Manifest {
            format: FORMAT.into(),
            kind: arch.kind,
            fc1_activation,
            categories: self.meta.categories.clone(),
            layers,
            total_params: arch.param_count(),
            step: self.meta.step,
            rng: self.meta.rng.clone(),
            adam: AdamManifest {
                t: self.adam.t,
                hyper: self.adam.hyper,
            },
            blob: blob_name,
            sha256: sha256_hex(&blob),
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(&blob_file, &blob)?;
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| NetError::CheckpointCorrupt(e.to_string()))?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    /// Loads and validates a checkpoint. With `expected` set, a checkpoint
    /// of another model kind is rejected.
    pub fn load(path: impl AsRef<Path>, expected: Option<ModelKind>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| NetError::CheckpointCorrupt(format!("manifest: {e}")))?;
        if manifest.format != FORMAT {
            return Err(NetError::CheckpointCorrupt(format!(
                "unknown format {:?}",
                manifest.format
            )));
        }
        let arch = architecture_for(manifest.kind, manifest.fc1_activation, manifest.categories.len())?;
        if let Some(kind) = expected {
            if kind != manifest.kind {
                let layers: Vec<String> = manifest
                    .layers
                    .iter()
                    .take(arch.tensor_shapes().len())
                    .map(|l| format!("{}{:?}", l.name, l.shape))
                    .collect();
                return Err(NetError::Shape(format!(
                    "checkpoint holds a {:?} ({}), expected a {:?}",
                    manifest.kind,
                    layers.join(", "),
                    kind
                )));
            }
        }
        let expected_layers = expected_layers(&arch);
        if manifest.layers != expected_layers {
            return Err(NetError::CheckpointCorrupt(
                "layer table does not match the architecture".into(),
            ));
        }
        if manifest.total_params != arch.param_count()
            || (arch.kind == ModelKind::QNetwork && manifest.total_params != Q_NETWORK_PARAMS)
        {
            return Err(NetError::CheckpointCorrupt(format!(
                "total_params {} does not match architecture ({})",
                manifest.total_params,
                arch.param_count()
            )));
        }
        let blob_file = path.with_file_name(&manifest.blob);
        let blob = fs::read(&blob_file)?;
        let total_len = expected_layers.last().map_or(0, |l| l.offset + l.len);
        if blob.len() != total_len * 4 {
            return Err(NetError::CheckpointCorrupt(format!(
                "blob is {} bytes, manifest describes {}",
                blob.len(),
                total_len * 4
            )));
        }
        if sha256_hex(&blob) != manifest.sha256 {
            return Err(NetError::CheckpointCorrupt("sha256 mismatch".into()));
        }
        let mut tensors: Vec<Vec<f32>> = expected_layers
            .iter()
            .map(|l| {
                blob[l.offset * 4..(l.offset + l.len) * 4]
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect()
            })
            .collect();
        let n = arch.tensor_shapes().len();
        let v = tensors.split_off(2 * n);
        let m = tensors.split_off(n);
        let network = Network::from_tensors(arch, tensors)?;
        let adam = AdamState {
            hyper: manifest.adam.hyper,
            t: manifest.adam.t,
            m,
            v,
        };
        Ok(Self {
            network,
            adam,
            meta: CheckpointMeta {
                step: manifest.step,
                rng: manifest.rng,
                categories: manifest.categories,
            },
        })
    }
}
