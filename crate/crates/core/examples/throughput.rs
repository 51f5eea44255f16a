//! Times training steps of each architecture on synthetic scenes.

use std::time::Instant;

use lunet::data::{generate_dataset, SceneSpec};
use lunet::model::{build_model, Arch, ArchConfig};
use lunet::train::{train_step, Batch, OptimState, TrainConfig};

fn main() -> lunet::Result<()> {
    let base: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let size: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(64);
    let spec = SceneSpec { width: size, height: size, ..Default::default() };
    let samples = generate_dataset(&spec, 4)?;
    let refs: Vec<_> = samples.iter().collect();
    let batch = Batch::<f32>::from_samples(&refs)?;
    for arch in [Arch::UnetBaseline, Arch::LUnet, Arch::AlUnet] {
        let cfg = ArchConfig { base_channels: base, ..ArchConfig::new(arch) };
        let mut model = build_model::<f32>(&cfg)?;
        let mut optim = OptimState::new(&model);
        let tc = TrainConfig::default();
        let start = Instant::now();
        let steps = 3;
        for _ in 0..steps {
            train_step(&mut model, &batch, &mut optim, &tc)?;
        }
        let per = start.elapsed().as_secs_f64() / steps as f64;
        println!("{arch:<7} params {:>7}  {:.3} s/step (batch 4, {size}x{size})", model.param_count(), per);
    }
    Ok(())
}
