use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use super::RgbImage;
use crate::error::{Error, Result};
use crate::tensor::{ClassMap, Tensor};

fn png_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::UnsupportedImage(format!("{}: {e}", path.display()))
}

/// Loads an 8-bit grayscale or RGB PNG as a `bands×H×W` tensor in `[0, 1]`.
pub fn load_raster(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| png_err(path, e))?;
    let (color, depth) = {
        let info = reader.info();
        (info.color_type, info.bit_depth)
    };
    if depth != BitDepth::Eight {
        return Err(png_err(path, format!("bit depth {depth:?} (only 8-bit is supported)")));
    }
    let bands = match color {
        ColorType::Grayscale => 1,
        ColorType::Rgb => 3,
        other => return Err(png_err(path, format!("color type {other:?} (grayscale or RGB only)"))),
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| png_err(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| png_err(path, e))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let mut data = vec![0f32; bands * h * w];
    for y in 0..h {
        let line = &buf[y * info.line_size..y * info.line_size + w * bands];
        for x in 0..w {
            for b in 0..bands {
                data[(b * h + y) * w + x] = f32::from(line[x * bands + b]) / 255.0;
            }
        }
    }
    Tensor::new([bands, h, w], data)
}

fn write_png(path: &Path, width: usize, height: usize, color: ColorType, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| png_err(path, e))?;
    writer.write_image_data(bytes).map_err(|e| png_err(path, e))?;
    writer.finish().map_err(|e| png_err(path, e))
}

/// Writes a 1-band (grayscale) or 3-band (RGB) `bands×H×W` tensor; values
/// are clamped to `[0, 1]` and rounded to the nearest of 256 levels.
pub fn save_raster(tensor: &Tensor<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let [bands, h, w] = match *tensor.shape() {
        [b, h, w] => [b, h, w],
        _ => return Err(Error::invalid_shape("save_raster", format!("expected bands×H×W, got {:?}", tensor.shape()))),
    };
    let color = match bands {
        1 => ColorType::Grayscale,
        3 => ColorType::Rgb,
        _ => return Err(Error::invalid_shape("save_raster", format!("{bands} bands (1 or 3 supported)"))),
    };
    let mut bytes = vec![0u8; bands * h * w];
    for y in 0..h {
        for x in 0..w {
            for b in 0..bands {
                let v = tensor.data()[(b * h + y) * w + x].clamp(0.0, 1.0);
                bytes[(y * w + x) * bands + b] = (v * 255.0).round() as u8;
            }
        }
    }
    write_png(path, w, h, color, &bytes)
}

pub fn save_rgb(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = image.pixels.iter().flatten().copied().collect();
    write_png(path.as_ref(), image.width, image.height, ColorType::Rgb, &bytes)
}

/// Writes a `1×H×W` class map as 8-bit gray class indices.
pub fn save_class_map(map: &ClassMap, path: impl AsRef<Path>) -> Result<()> {
    if map.n != 1 {
        return Err(Error::invalid_shape("save_class_map", format!("expected one map, got {}", map.n)));
    }
    map.check_range(256)?;
    let bytes: Vec<u8> = map.classes.iter().map(|&c| c as u8).collect();
    write_png(path.as_ref(), map.width, map.height, ColorType::Grayscale, &bytes)
}

/// Reads an 8-bit gray PNG of class indices.
pub fn load_class_map(path: impl AsRef<Path>) -> Result<ClassMap> {
    let t = load_raster(path.as_ref())?;
    let [bands, h, w] = [t.shape()[0], t.shape()[1], t.shape()[2]];
    if bands != 1 {
        return Err(png_err(path.as_ref(), "class maps must be single-band"));
    }
    let classes = t.data().iter().map(|&v| (v * 255.0).round() as u32).collect();
    ClassMap::new(1, h, w, classes)
}

/// White-on-black change map for binary predictions.
pub fn binary_change_image(map: &ClassMap) -> Result<RgbImage> {
    if map.n != 1 {
        return Err(Error::invalid_shape("binary_change_image", format!("expected one map, got {}", map.n)));
    }
    map.check_range(2)?;
    Ok(RgbImage {
        width: map.width,
        height: map.height,
        pixels: map.classes.iter().map(|&c| if c == 1 { [255; 3] } else { [0; 3] }).collect(),
    })
}
