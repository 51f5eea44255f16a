//! Writes a small synthetic change-detection dataset to disk.
//!
//! Usage: `generate_dataset [out_dir] [count]`

use lunet::data::{generate_dataset, read_dataset, write_dataset, SceneSpec};

fn main() -> lunet::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "synthetic".into());
    let count = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);
    let spec = SceneSpec { phases: 3, ..SceneSpec::default() };
    let samples = generate_dataset(&spec, count)?;
    write_dataset(&out, &samples, Some(&spec))?;
    let back = read_dataset(&out)?;
    let changed: usize = back.iter().map(|s| s.label.classes.iter().filter(|&&c| c != 0 && c != 7).count()).sum();
    println!("wrote {} scenes to {out}, {changed} changed pixels", back.len());
    Ok(())
}
