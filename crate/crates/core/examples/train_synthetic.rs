//! Trains a small L-UNet on synthetic scenes and scores held-out ones.

use lunet::data::{generate_dataset, generate_scene, SceneSpec};
use lunet::model::{build_model, Arch, ArchConfig, ModelGraph};
use lunet::train::{evaluate, fit, TrainConfig};

fn main() -> lunet::Result<()> {
    let spec = SceneSpec { width: 32, height: 32, object_min_size: 6, object_max_size: 14, jitter: 1, ..SceneSpec::default() };
    let train = generate_dataset(&spec, 48)?;
    let test: Vec<_> = (48..64).map(|i| generate_scene(&spec, i).map(|s| s.sample)).collect::<lunet::Result<_>>()?;
    let mut model: ModelGraph<f32> = build_model(&ArchConfig { base_channels: 8, ..ArchConfig::new(Arch::LUnet) })?;
    let cfg = TrainConfig { epochs: 25, batch_size: 4, learning_rate: 2e-3, validation_fraction: 0.0, ..TrainConfig::default() };
    let log = fit(&mut model, &train, &cfg)?;
    for e in &log.epochs {
        println!("epoch {} loss {:.4}", e.epoch, e.mean_loss);
    }
    let refs: Vec<_> = test.iter().collect();
    println!("{}", evaluate(&model, &refs, 4)?.report()?.table("L-UNet"));
    Ok(())
}
