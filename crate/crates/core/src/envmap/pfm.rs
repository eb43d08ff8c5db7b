//! Portable float map (`.pfm`) I/O: little-endian on write, either on read.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

pub fn encode_pfm(img: &Image) -> Result<Vec<u8>> {
    let tag = match img.channels() {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::domain(format!("PFM stores 1 or 3 channels, not {c}"))),
    };
    let (w, h) = img.dims();
    let mut out = format!("{tag}\n{w} {h}\n-1.0\n").into_bytes();
    let row = w * img.channels();
    // rows are stored bottom to top
    for y in (0..h).rev() {
        for v in &img.data()[y * row..(y + 1) * row] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0usize;
    let mut token = |what: &str| -> Result<(usize, String)> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(start as u64, format!("missing {what}")));
        }
        let t = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        Ok((start, t))
    };
    let (_, tag) = token("signature")?;
    let channels = match tag.as_str() {
        "PF" => 3,
        "Pf" => 1,
        _ => return Err(Error::parse(0, format!("bad PFM signature {tag:?}"))),
    };
    let (at, w) = token("width")?;
    let w: usize = w.parse().map_err(|_| Error::parse(at as u64, "bad width"))?;
    let (at, h) = token("height")?;
    let h: usize = h.parse().map_err(|_| Error::parse(at as u64, "bad height"))?;
    let (at, scale) = token("scale")?;
    let scale: f64 = scale.parse().map_err(|_| Error::parse(at as u64, "bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::parse(at as u64, "scale must be nonzero"));
    }
    // exactly one whitespace byte separates the header from the data
    let data_start = pos + 1;
    let n = w * h * channels;
    if bytes.len() < data_start + 4 * n {
        return Err(Error::parse(bytes.len() as u64, "truncated PFM data"));
    }
    let little = scale < 0.0;
    let row = w * channels;
    let mut data = vec![0.0; n];
    for (i, chunk) in bytes[data_start..data_start + 4 * n].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (file_row, col) = (i / row, i % row);
        data[(h - 1 - file_row) * row + col] = v as f64;
    }
    Image::from_vec(w, h, channels, data)
}

pub fn write_pfm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    fs::write(path, encode_pfm(img)?)?;
    Ok(())
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Image> {
    decode_pfm(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_keeps_row_order() {
        let img = Image::from_fn(4, 3, 3, |x, y, c| (x * 10 + y * 100 + c) as f64);
        let bytes = encode_pfm(&img).unwrap();
        assert!(bytes.starts_with(b"PF\n4 3\n-1.0\n"));
        assert_eq!(decode_pfm(&bytes).unwrap(), img);
        let gray = Image::from_fn(2, 2, 1, |x, y, _| (x + 2 * y) as f64);
        assert_eq!(decode_pfm(&encode_pfm(&gray).unwrap()).unwrap(), gray);
    }

    #[test]
    fn big_endian_accepted() {
        let mut bytes = b"Pf\n1 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&2.5f32.to_be_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap().data(), &[2.5]);
    }
}
