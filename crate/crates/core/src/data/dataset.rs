//! On-disk dataset layout: one sub-directory per sample holding
//! `phase_1.png … phase_T.png`, `label.png` (class index as 8-bit gray) and
//! `meta.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::raster::{load_class_map, load_raster, save_class_map, save_raster};
use super::{Sample, SceneSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub index: usize,
    pub phases: usize,
    pub classes: usize,
    pub spec: Option<SceneSpec>,
}

pub fn sample_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("sample_{index:05}"))
}

/// Writes `samples` under `root`, echoing `spec` into each `meta.json`.
pub fn write_dataset(root: impl AsRef<Path>, samples: &[Sample], spec: Option<&SceneSpec>) -> Result<()> {
    let root = root.as_ref();
    for (i, s) in samples.iter().enumerate() {
        let dir = sample_dir(root, i);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for t in 0..s.phases() {
            save_raster(&s.images.outer(t)?, dir.join(format!("phase_{}.png", t + 1)))?;
        }
        save_class_map(&s.label, dir.join("label.png"))?;
        let meta = SampleMeta {
            index: i,
            phases: s.phases(),
            classes: spec.map_or(s.label.max_class() as usize + 1, SceneSpec::label_classes),
            spec: spec.cloned(),
        };
        let path = dir.join("meta.json");
        fs::write(&path, serde_json::to_vec_pretty(&meta)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Reads one sample directory. Phases are found by probing `phase_1.png`,
/// `phase_2.png`, … until one is missing.
pub fn read_sample(dir: impl AsRef<Path>) -> Result<Sample> {
    let dir = dir.as_ref();
    let mut phases = Vec::new();
    while dir.join(format!("phase_{}.png", phases.len() + 1)).exists() {
        phases.push(load_raster(dir.join(format!("phase_{}.png", phases.len() + 1)))?);
    }
    if phases.is_empty() {
        return Err(Error::Format(format!("{}: no phase_1.png", dir.display())));
    }
    let images = Tensor::stack(&phases)?;
    let label = load_class_map(dir.join("label.png"))?;
    let [_, _, h, w] = images.dims4("read_sample")?;
    if (label.height, label.width) != (h, w) {
        return Err(Error::shape("read_sample (label vs phases)", &label.shape(), images.shape()));
    }
    Ok(Sample {
        images,
        label,
        masks: Vec::new(),
    })
}

/// Reads every `sample_*` directory under `root`, in name order.
pub fn read_dataset(root: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let root = root.as_ref();
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("sample_"))
        })
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Format(format!("{}: no sample_* directories", root.display())));
    }
    dirs.iter().map(read_sample).collect()
}
