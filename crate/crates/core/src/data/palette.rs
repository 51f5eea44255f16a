use crate::error::{Error, Result};
use crate::tensor::ClassMap;

/// Fixed pseudo-color table; class 0 is black.
pub const PALETTE: [[u8; 3]; 8] = [
    [0, 0, 0],
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [255, 255, 255],
];

/// 8-bit RGB raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

/// Colors a single `1×H×W` class map with [`PALETTE`].
pub fn render_pseudocolor(map: &ClassMap, classes: usize) -> Result<RgbImage> {
    if classes == 0 || classes > PALETTE.len() {
        return Err(Error::InvalidArgument(format!(
            "pseudo-color palette covers 1..={} classes, got {classes}",
            PALETTE.len()
        )));
    }
    if map.n != 1 {
        return Err(Error::invalid_shape("render_pseudocolor", format!("expected one map, got {}", map.n)));
    }
    map.check_range(classes)?;
    Ok(RgbImage {
        width: map.width,
        height: map.height,
        pixels: map.classes.iter().map(|&c| PALETTE[c as usize]).collect(),
    })
}
