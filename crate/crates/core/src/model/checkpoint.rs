//! Single-file checkpoints: one line of JSON manifest (architecture config
//! plus `{name, shape}` per parameter), then one raw tensor record per
//! parameter in manifest order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArchConfig, ModelGraph};
use crate::error::{Error, Result};
use crate::tensor::{read_tensor_from, write_tensor_to, Real};

pub const CHECKPOINT_FORMAT: &str = "lunet-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: ArchConfig,
    pub entries: Vec<CheckpointEntry>,
}

impl Manifest {
    pub fn for_model<T: Real>(model: &ModelGraph<T>) -> Self {
        Manifest {
            format: CHECKPOINT_FORMAT.to_string(),
            config: model.config().clone(),
            entries: model
                .params()
                .into_iter()
                .map(|(name, t)| CheckpointEntry {
                    name,
                    shape: t.shape().to_vec(),
                })
                .collect(),
        }
    }
}

pub fn write_checkpoint<T: Real, W: Write>(model: &ModelGraph<T>, mut w: W) -> Result<()> {
    let manifest = Manifest::for_model(model);
    let io = |e| Error::io("<checkpoint>", e);
    serde_json::to_writer(&mut w, &manifest)?;
    w.write_all(b"\n").map_err(io)?;
    for (_, t) in model.params() {
        write_tensor_to(t, &mut w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a checkpoint, rebuilding the graph from its embedded config.
pub fn read_checkpoint<T: Real, R: BufRead>(mut r: R) -> Result<ModelGraph<T>> {
    let manifest = read_manifest(&mut r)?;
    let mut model = ModelGraph::build(&manifest.config)?;
    fill_params(&mut model, &manifest, r)?;
    Ok(model)
}

/// Loads parameters into an existing model. Every manifest entry must match
/// the model's own parameter name and shape, in order.
pub fn load_checkpoint_into<T: Real>(model: &mut ModelGraph<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let manifest = read_manifest(&mut r)?;
    fill_params(model, &manifest, r)
}

pub fn save_checkpoint<T: Real>(model: &ModelGraph<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(model, BufWriter::new(file))
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<ModelGraph<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}

fn read_manifest<R: BufRead>(r: &mut R) -> Result<Manifest> {
    let mut line = String::new();
    r.read_line(&mut line)
        .map_err(|e| Error::Format(format!("checkpoint manifest unreadable: {e}")))?;
    if !line.ends_with('\n') {
        return Err(Error::Format("checkpoint manifest is truncated".into()));
    }
    let manifest: Manifest = serde_json::from_str(&line)
        .map_err(|e| Error::Format(format!("checkpoint manifest is not valid JSON: {e}")))?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(Error::Format(format!("unknown checkpoint format `{}`", manifest.format)));
    }
    Ok(manifest)
}

fn fill_params<T: Real, R: Read>(model: &mut ModelGraph<T>, manifest: &Manifest, mut r: R) -> Result<()> {
    let expected = Manifest::for_model(model).entries;
    for (i, want) in expected.iter().enumerate() {
        let Some(got) = manifest.entries.get(i) else {
            return Err(Error::Checkpoint {
                name: want.name.clone(),
                reason: "missing from checkpoint".into(),
            });
        };
        if got != want {
            return Err(Error::Checkpoint {
                name: got.name.clone(),
                reason: format!(
                    "expected `{}` with shape {:?}, checkpoint has shape {:?}",
                    want.name, want.shape, got.shape
                ),
            });
        }
    }
    if let Some(extra) = manifest.entries.get(expected.len()) {
        return Err(Error::Checkpoint {
            name: extra.name.clone(),
            reason: "not present in the target model".into(),
        });
    }
    let mut loaded = Vec::with_capacity(expected.len());
    for entry in &expected {
        let t = read_tensor_from::<T, _>(&mut r).map_err(|e| Error::Checkpoint {
            name: entry.name.clone(),
            reason: e.to_string(),
        })?;
        if t.shape() != entry.shape.as_slice() {
            return Err(Error::Checkpoint {
                name: entry.name.clone(),
                reason: format!("record shape {:?} disagrees with manifest {:?}", t.shape(), entry.shape),
            });
        }
        loaded.push(t);
    }
    for (dst, src) in model.params_mut().into_iter().zip(loaded) {
        *dst = src;
    }
    Ok(())
}
