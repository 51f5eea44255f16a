//! Saves a model and loads it back.

use lunet::model::{build_model, load_checkpoint, save_checkpoint, Arch, ArchConfig, ModelGraph};
use lunet::tensor::Tensor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("lunet-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.ckpt");
    let model: ModelGraph<f32> = build_model(&ArchConfig { init_seed: 42, ..ArchConfig::new(Arch::AlUnet) })?;
    save_checkpoint(&model, &path)?;
    let back: ModelGraph<f32> = load_checkpoint(&path)?;
    let x = Tensor::from_fn([2, 1, 3, 32, 32], |i| (i % 13) as f32 / 13.0);
    let same = model.predict(&x)? == back.predict(&x)?;
    println!("{} bytes, {} params, predictions identical: {same}", std::fs::metadata(&path)?.len(), back.param_count());
    Ok(())
}
