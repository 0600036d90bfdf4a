use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ModelConfig, Regime};
use super::transformer::Transformer;
use super::vocab::Vocabulary;
use super::ModelError;
use crate::numerics::Tensor;

const MAGIC: &[u8; 8] = b"PHPROBE1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub corpus_hash: String,
    pub regime: Regime,
    pub seed: u64,
    /// Epoch whose parameters were kept.
    pub epoch: usize,
    pub steps: u64,
    pub dev_accuracy: f64,
}

/// A trained model with its provenance.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Transformer,
    pub metadata: TrainingMetadata,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocabulary: Vocabulary,
    metadata: TrainingMetadata,
    tensors: Vec<TensorEntry>,
    blob_bytes: usize,
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

impl Checkpoint {
    /// `MAGIC`, header length (u64 LE), JSON header, then every tensor as
    /// little-endian f64 in layout order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let layout = self.model.layout();
        let mut offset = 0;
        let mut tensors = Vec::with_capacity(layout.len());
        for (name, shape) in layout.names.iter().zip(&layout.shapes) {
            tensors.push(TensorEntry {
                name: name.clone(),
                shape: shape.clone(),
                offset,
            });
            offset += shape.iter().product::<usize>() * 8;
        }
        let header = Header {
            config: self.model.config().clone(),
            vocabulary: self.model.vocab().clone(),
            metadata: self.metadata.clone(),
            tensors,
            blob_bytes: offset,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.model.params() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(corrupt("not a checkpoint file"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if hlen > body.len() {
            return Err(corrupt("header length exceeds file size"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])
            .map_err(|e| corrupt(format!("bad header: {e}")))?;
        let blob = &body[hlen..];
        if blob.len() != header.blob_bytes {
            return Err(corrupt(format!(
                "blob has {} bytes, header declares {}",
                blob.len(),
                header.blob_bytes
            )));
        }
        let mut model = Transformer::build(header.config, header.vocabulary)?;
        let layout = model.layout().clone();
        if header.tensors.len() != layout.len() {
            return Err(corrupt("tensor table does not match the configuration"));
        }
        let mut expected = 0;
        let mut params = Vec::with_capacity(layout.len());
        for (entry, (name, shape)) in header
            .tensors
            .iter()
            .zip(layout.names.iter().zip(&layout.shapes))
        {
            if &entry.name != name || &entry.shape != shape {
                return Err(corrupt(format!(
                    "unexpected tensor {} {:?}",
                    entry.name, entry.shape
                )));
            }
            if entry.offset != expected {
                return Err(corrupt(format!(
                    "tensor {} at offset {}, expected {expected}",
                    entry.name, entry.offset
                )));
            }
            let n: usize = shape.iter().product();
            let data = blob[expected..expected + n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            params.push(Tensor::new(shape.clone(), data)?);
            expected += n * 8;
        }
        if expected != blob.len() {
            return Err(corrupt("tensor table does not cover the blob"));
        }
        model.set_params(params)?;
        Ok(Self {
            model,
            metadata: header.metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_bytes()).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = fs::read(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 of the serialized form.
    pub fn digest(&self) -> String {
        format!("{:x}", Sha256::digest(self.to_bytes()))
    }
}
