//! Builds each architecture and pushes a two-phase 64x64 scene through it.

use lunet::model::{build_model, Arch, ArchConfig, LayerKind, ModelGraph};
use lunet::tensor::Tensor;

fn main() -> lunet::Result<()> {
    let x = Tensor::<f32>::from_fn([2, 1, 3, 64, 64], |i| (i % 97) as f32 / 97.0);
    for arch in [Arch::UnetBaseline, Arch::LUnet, Arch::AlUnet] {
        let model: ModelGraph<f32> = build_model(&ArchConfig::new(arch))?;
        let (logits, _) = model.forward(&x)?;
        println!(
            "{arch:<7} params {:>8}  pools {}  upsamples {}  dilations {:?}  logits {:?}",
            model.param_count(),
            model.count(LayerKind::MaxPool),
            model.count(LayerKind::Upsample),
            model.encoder_dilations(),
            logits.shape()
        );
        for (name, width) in model.lstm_widths() {
            println!("    {name}: {width} hidden channels");
        }
    }
    Ok(())
}
