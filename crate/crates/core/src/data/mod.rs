//! Synthetic multi-temporal change scenes, multi-phase label encoding,
//! PNG raster I/O, patch extraction and pseudo-color rendering.

mod dataset;
mod label;
mod palette;
mod patch;
mod raster;
mod scene;

pub use dataset::{read_dataset, read_sample, sample_dir, write_dataset, SampleMeta};
pub use label::{appearance_label, decode_multiphase_label, encode_multiphase_label};
pub use palette::{render_pseudocolor, RgbImage, PALETTE};
pub use patch::patchify;
pub use raster::{binary_change_image, load_class_map, load_raster, save_class_map, save_raster, save_rgb};
pub use scene::{generate_dataset, generate_scene, phase_masks, Building, Sample, Scene, SceneSpec};
