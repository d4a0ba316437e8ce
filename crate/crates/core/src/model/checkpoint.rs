use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AudioModel, AvModel, Modality, ModelConfig, VisualModel};
use crate::error::{Error, Result};
use crate::nn::{ParamMut, TensorVisitor};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"AVCK";

/// Collects every parameter and running buffer reachable through a visitor
/// into named owned tensors.
pub fn snapshot_tensors(
    visit: impl FnOnce(&mut TensorVisitor<'_>),
) -> BTreeMap<String, ArrayD<f64>> {
    let mut out = BTreeMap::new();
    let mut f = |name: String, p: ParamMut<'_>| {
        out.insert(name, p.value.to_owned());
    };
    visit(&mut f);
    out
}

/// Writes stored tensors back into a model via its visitor. Extra entries in
/// the map are ignored (optimizer state rides along in the same archive);
/// tensors the model expects but the map lacks, or shape disagreements, are
/// errors.
pub fn restore_tensors(
    tensors: &BTreeMap<String, ArrayD<f64>>,
    visit: impl FnOnce(&mut TensorVisitor<'_>),
) -> Result<()> {
    let mut problems: Vec<String> = Vec::new();
    let mut f = |name: String, mut p: ParamMut<'_>| match tensors.get(&name) {
        Some(t) if t.shape() == p.value.shape() => p.value.assign(t),
        Some(t) => problems.push(format!(
            "{name}: stored shape {:?}, model shape {:?}",
            t.shape(),
            p.value.shape()
        )),
        None => problems.push(format!("{name}: missing from archive")),
    };
    visit(&mut f);
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::CheckpointFormat(problems.join("; ")))
    }
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    modality: Modality,
    meta: Value,
    tensors: Vec<TensorEntry>,
}

/// Single-file parameter archive: a fixed magic and version, a JSON header
/// describing the config, modality, free-form metadata and the tensor
/// directory, followed by the raw tensor data as little-endian f64 in
/// directory order.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub modality: Modality,
    pub meta: Value,
    pub tensors: BTreeMap<String, ArrayD<f64>>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let entries: Vec<TensorEntry> = self
            .tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect();
        let header = Header {
            config: self.config.clone(),
            modality: self.modality,
            meta: self.meta.clone(),
            tensors: entries,
        };
        let header_json = serde_json::to_vec(&header)?;

        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        bytes.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&header_json);
        for t in self.tensors.values() {
            for v in t.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let fail = |msg: &str| Error::CheckpointFormat(format!("{}: {msg}", path.display()));
        if bytes.len() < 16 {
            return Err(fail("file too short for header"));
        }
        if &bytes[0..4] != MAGIC {
            return Err(fail("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointFormat(format!(
                "{}: unsupported version {version}",
                path.display()
            )));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        if bytes.len() < 16 + header_len {
            return Err(fail("truncated header"));
        }
        let header: Header = serde_json::from_slice(&bytes[16..16 + header_len])?;

        let mut tensors = BTreeMap::new();
        let mut at = 16 + header_len;
        for entry in &header.tensors {
            let count: usize = entry.shape.iter().product();
            let end = at + 8 * count;
            if bytes.len() < end {
                return Err(fail("truncated tensor data"));
            }
            let values: Vec<f64> = bytes[at..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let arr = ArrayD::from_shape_vec(IxDyn(&entry.shape), values)
                .map_err(|e| Error::CheckpointFormat(e.to_string()))?;
            tensors.insert(entry.name.clone(), arr);
            at = end;
        }
        if at != bytes.len() {
            return Err(fail("trailing bytes after tensor data"));
        }
        Ok(Checkpoint {
            config: header.config,
            modality: header.modality,
            meta: header.meta,
            tensors,
        })
    }
}

impl AudioModel {
    pub fn snapshot(&mut self) -> BTreeMap<String, ArrayD<f64>> {
        snapshot_tensors(|f| self.visit("model", f))
    }

    pub fn restore(&mut self, tensors: &BTreeMap<String, ArrayD<f64>>) -> Result<()> {
        restore_tensors(tensors, |f| self.visit("model", f))
    }
}

impl VisualModel {
    pub fn snapshot(&mut self) -> BTreeMap<String, ArrayD<f64>> {
        snapshot_tensors(|f| self.visit("model", f))
    }

    pub fn restore(&mut self, tensors: &BTreeMap<String, ArrayD<f64>>) -> Result<()> {
        restore_tensors(tensors, |f| self.visit("model", f))
    }
}

impl AvModel {
    pub fn snapshot(&mut self) -> BTreeMap<String, ArrayD<f64>> {
        snapshot_tensors(|f| self.visit("model", f))
    }

    pub fn restore(&mut self, tensors: &BTreeMap<String, ArrayD<f64>>) -> Result<()> {
        restore_tensors(tensors, |f| self.visit("model", f))
    }
}
