//! Image decoding/encoding between files, byte buffers and the crate's arrays.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage, RgbaImage};
use ndarray::{Array2, Array3};

use super::types::{Illustration, LineArt};
use crate::error::{Error, Result};

pub fn decode_image(bytes: &[u8]) -> Result<DynamicImage> {
    image::load_from_memory(bytes).map_err(|e| Error::Decode(e.to_string()))
}

/// `(width, height)` from the image header, without decoding pixels.
pub fn image_dimensions(bytes: &[u8]) -> Result<(u32, u32)> {
    image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::Decode(e.to_string()))?
        .into_dimensions()
        .map_err(|e| Error::Decode(e.to_string()))
}

pub fn read_image(path: &Path) -> Result<DynamicImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|e| Error::Decode(format!("{}: {e}", path.display())))
}

/// RGB array in [0, 1], channel-first.
pub fn rgb_array(img: &DynamicImage) -> Array3<f32> {
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    Array3::from_shape_fn((3, h as usize, w as usize), |(c, y, x)| {
        rgb.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    })
}

/// Greyscale array in [0, 1]. Colour inputs go through BT.601 luma.
pub fn grey_array(img: &DynamicImage) -> Array2<f32> {
    match img {
        DynamicImage::ImageLuma8(g) => {
            let (w, h) = g.dimensions();
            Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
                g.get_pixel(x as u32, y as u32)[0] as f32 / 255.0
            })
        }
        _ => super::types::luma(&rgb_array(img)),
    }
}

/// RGBA array in [0, 1] with straight alpha, channel-first.
pub fn rgba_array(img: &DynamicImage) -> Array3<f32> {
    let rgba = img.to_rgba8();
    let (w, h) = rgba.dimensions();
    Array3::from_shape_fn((4, h as usize, w as usize), |(c, y, x)| {
        rgba.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    })
}

pub fn load_illustration(path: &Path) -> Result<Illustration> {
    let img = read_image(path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Illustration::from_unit_rgb(rgb_array(&img), id)
}

pub fn load_line_art(path: &Path) -> Result<LineArt> {
    LineArt::new(grey_array(&read_image(path)?))
}

#[inline]
fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn rgb_image(unit_rgb: &Array3<f32>) -> RgbImage {
    let (h, w) = (unit_rgb.shape()[1], unit_rgb.shape()[2]);
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        image::Rgb([
            quantize(unit_rgb[[0, y, x]]),
            quantize(unit_rgb[[1, y, x]]),
            quantize(unit_rgb[[2, y, x]]),
        ])
    })
}

pub fn grey_image(grey: &Array2<f32>) -> GrayImage {
    let (h, w) = grey.dim();
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        image::Luma([quantize(grey[[y as usize, x as usize]])])
    })
}

pub fn rgba_image(unit_rgba: &Array3<f32>) -> RgbaImage {
    let (h, w) = (unit_rgba.shape()[1], unit_rgba.shape()[2]);
    RgbaImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        image::Rgba([
            quantize(unit_rgba[[0, y, x]]),
            quantize(unit_rgba[[1, y, x]]),
            quantize(unit_rgba[[2, y, x]]),
            quantize(unit_rgba[[3, y, x]]),
        ])
    })
}

pub fn encode_png(img: &DynamicImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

/// Write via a sibling temp file and rename, so readers never see partial files.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn save_illustration(path: &Path, illustration: &Illustration) -> Result<()> {
    let img = DynamicImage::ImageRgb8(rgb_image(&illustration.to_unit_rgb()));
    write_atomic(path, &encode_png(&img)?)
}

pub fn save_line_art(path: &Path, line_art: &LineArt) -> Result<()> {
    let img = DynamicImage::ImageLuma8(grey_image(&line_art.pixels));
    write_atomic(path, &encode_png(&img)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_preserves_quantized_values() {
        let rgb = Array3::from_shape_fn((3, 5, 7), |(c, y, x)| ((c * 31 + y * 7 + x * 3) % 256) as f32 / 255.0);
        let png = encode_png(&DynamicImage::ImageRgb8(rgb_image(&rgb))).unwrap();
        let back = rgb_array(&decode_image(&png).unwrap());
        assert_eq!(back, rgb);
    }

    #[test]
    fn grey_of_colour_png_uses_luma() {
        let img = DynamicImage::ImageRgb8(RgbImage::from_pixel(2, 2, image::Rgb([255, 0, 0])));
        let g = grey_array(&img);
        assert!((g[[0, 0]] - 0.299).abs() < 1e-6);
    }

    #[test]
    fn garbage_bytes_fail_to_decode() {
        assert!(matches!(decode_image(b"not a png"), Err(Error::Decode(_))));
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.bin");
        write_atomic(&path, b"abc").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"abc");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
