use crate::error::{Error, Result};
use crate::tensor::ClassMap;

/// Packs per-phase binary masks into one class per pixel, earliest phase as
/// the most significant digit: `class = Σ_t mask_t · 2^(T−t)` for t = 1..T.
pub fn encode_multiphase_label(masks: &[ClassMap]) -> Result<ClassMap> {
    let first = masks
        .first()
        .ok_or_else(|| Error::InvalidArgument("encode_multiphase_label: no masks".into()))?;
    if masks.len() > 16 {
        return Err(Error::InvalidArgument(format!("{} phases do not fit a class index", masks.len())));
    }
    let mut classes = vec![0u32; first.len()];
    for (t, m) in masks.iter().enumerate() {
        if m.shape() != first.shape() {
            return Err(Error::shape("encode_multiphase_label", &first.shape(), &m.shape()));
        }
        if let Some(&bad) = m.classes.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidArgument(format!(
                "encode_multiphase_label: phase {} mask holds non-binary value {bad}",
                t + 1
            )));
        }
        for (c, &v) in classes.iter_mut().zip(&m.classes) {
            *c = (*c << 1) | v;
        }
    }
    ClassMap::new(first.n, first.height, first.width, classes)
}

/// Inverse of [`encode_multiphase_label`] for `phases` digits.
pub fn decode_multiphase_label(label: &ClassMap, phases: usize) -> Result<Vec<ClassMap>> {
    if phases == 0 || phases > 16 {
        return Err(Error::InvalidArgument(format!("cannot decode {phases} phases")));
    }
    label.check_range(1 << phases)?;
    Ok((0..phases)
        .map(|t| {
            let shift = phases - 1 - t;
            ClassMap {
                classes: label.classes.iter().map(|&c| (c >> shift) & 1).collect(),
                ..label.clone()
            }
        })
        .collect())
}

/// Binary change label used for two-phase scenes: a pixel is changed when
/// it turns from background into building (`01₂`).
pub fn appearance_label(masks: &[ClassMap]) -> Result<ClassMap> {
    let encoded = encode_multiphase_label(masks)?;
    Ok(ClassMap {
        classes: encoded.classes.iter().map(|&c| u32::from(c == 1)).collect(),
        ..encoded
    })
}
