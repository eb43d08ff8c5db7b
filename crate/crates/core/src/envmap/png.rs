use std::path::Path;

use ::image::{ExtendedColorType, ImageReader};

use crate::error::{Error, Result};
use crate::image::Image;

/// Writes an 8-bit PNG; values are clamped to `[0, 1]`.
pub fn write_png(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let kind = match img.channels() {
        1 => ExtendedColorType::L8,
        3 => ExtendedColorType::Rgb8,
        c => return Err(Error::domain(format!("PNG export needs 1 or 3 channels, not {c}"))),
    };
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    ::image::save_buffer_with_format(
        path,
        &bytes,
        img.width() as u32,
        img.height() as u32,
        kind,
        ::image::ImageFormat::Png,
    )
    .map_err(|e| Error::Codec(e.to_string()))
}

/// Reads a PNG as values in `[0, 1]`; grayscale files keep one channel.
pub fn read_png(path: impl AsRef<Path>) -> Result<Image> {
    let decoded = ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|e| Error::Codec(e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    if decoded.color().has_color() {
        let buf = decoded.to_rgb8();
        Image::from_vec(w, h, 3, buf.into_raw().into_iter().map(|b| b as f64 / 255.0).collect())
    } else {
        let buf = decoded.to_luma8();
        Image::from_vec(w, h, 1, buf.into_raw().into_iter().map(|b| b as f64 / 255.0).collect())
    }
}
