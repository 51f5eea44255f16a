//! Finite-difference check of every layer gradient of a small model.

use lunet::model::{build_model, Arch, ArchConfig, ModelGraph};
use lunet::tensor::Tensor;
use lunet::train::gradcheck_model;

fn main() -> lunet::Result<()> {
    for arch in [Arch::UnetBaseline, Arch::LUnet, Arch::AlUnet] {
        let cfg = ArchConfig {
            depth: 2,
            base_channels: 4,
            atrous_rates: (arch == Arch::AlUnet).then(|| vec![1, 2]),
            ..ArchConfig::new(arch)
        };
        let mut model: ModelGraph<f64> = build_model(&cfg)?;
        let x = Tensor::from_fn([2, 1, 3, 8, 8], |i| ((i * 7919) % 101) as f64 / 101.0 - 0.5);
        let rows = gradcheck_model(&mut model, &x, 1e-5, 4, 0)?;
        let worst = rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
        println!("{arch:<7} {} layers, worst relative error {worst:.2e}", rows.len());
    }
    Ok(())
}
