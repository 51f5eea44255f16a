//! Encodes per-phase building masks into one label and renders it.

use lunet::data::{decode_multiphase_label, encode_multiphase_label, generate_scene, render_pseudocolor, save_rgb, SceneSpec};
use lunet::tensor::ClassMap;

fn main() -> lunet::Result<()> {
    let px = |v| ClassMap::filled(1, 1, 1, v);
    for bits in 0..8u32 {
        let masks: Vec<_> = (0..3).map(|t| px((bits >> (2 - t)) & 1)).collect();
        let label = encode_multiphase_label(&masks)?;
        let back = decode_multiphase_label(&label, 3)?;
        let pattern: Vec<u32> = back.iter().map(|m| m.classes[0]).collect();
        println!("{pattern:?} -> class {}", label.classes[0]);
    }
    let scene = generate_scene(&SceneSpec { phases: 3, ..SceneSpec::default() }, 0)?;
    let out = std::env::temp_dir().join("lunet-multiphase.png");
    save_rgb(&render_pseudocolor(&scene.sample.label, 8)?, &out)?;
    println!("scene 0 label rendered to {}", out.display());
    Ok(())
}
