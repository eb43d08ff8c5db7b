//! Radiance RGBE (`.hdr`) reader and writer.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

/// Shared-exponent encoding of one pixel. Mantissas are truncated.
pub fn rgbe_encode(rgb: [f64; 3]) -> Result<[u8; 4]> {
    if rgb.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::domain(format!("RGBE needs finite nonnegative values, got {rgb:?}")));
    }
    let v = rgb[0].max(rgb[1]).max(rgb[2]);
    if v < 1e-32 {
        return Ok([0, 0, 0, 0]);
    }
    let (m, e) = frexp(v);
    if e + 128 <= 0 {
        return Ok([0, 0, 0, 0]);
    }
    if e + 128 > 255 {
        return Err(Error::domain(format!("value {v} too large for RGBE")));
    }
    let scale = m * 256.0 / v;
    let q = |c: f64| ((c * scale) as i64).clamp(0, 255) as u8;
    Ok([q(rgb[0]), q(rgb[1]), q(rgb[2]), (e + 128) as u8])
}

/// Decodes to the center of the quantization bin; zero mantissas and the
/// zero exponent decode to exact zero.
pub fn rgbe_decode(px: [u8; 4]) -> [f64; 3] {
    if px[3] == 0 {
        return [0.0; 3];
    }
    let f = 2f64.powi(px[3] as i32 - 136);
    let d = |m: u8| if m == 0 { 0.0 } else { (m as f64 + 0.5) * f };
    [d(px[0]), d(px[1]), d(px[2])]
}

/// `v = m·2^e` with `m` in `[0.5, 1)` for positive normal `v`.
fn frexp(v: f64) -> (f64, i32) {
    let bits = v.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    if exp == 0 {
        // subnormal: rescale first
        let (m, e) = frexp(v * 2f64.powi(64));
        return (m, e - 64);
    }
    let m = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1022u64 << 52));
    (m, exp - 1022)
}

pub fn encode_hdr(img: &Image) -> Result<Vec<u8>> {
    let (w, h) = img.dims();
    if !matches!(img.channels(), 1 | 3) {
        return Err(Error::domain("RGBE export needs 1 or 3 channels"));
    }
    let mut out = format!("#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y {h} +X {w}\n").into_bytes();
    let mut scan = vec![[0u8; 4]; w];
    for y in 0..h {
        for (x, px) in scan.iter_mut().enumerate() {
            let p = img.pixel(x, y);
            let rgb = if p.len() == 1 { [p[0]; 3] } else { [p[0], p[1], p[2]] };
            *px = rgbe_encode(rgb)?;
        }
        if (8..0x8000).contains(&w) {
            out.extend_from_slice(&[2, 2, (w >> 8) as u8, (w & 0xff) as u8]);
            for c in 0..4 {
                let channel: Vec<u8> = scan.iter().map(|p| p[c]).collect();
                rle_channel(&channel, &mut out);
            }
        } else {
            for px in &scan {
                out.extend_from_slice(px);
            }
        }
    }
    Ok(out)
}

fn rle_channel(data: &[u8], out: &mut Vec<u8>) {
    const MIN_RUN: usize = 4;
    let n = data.len();
    let mut cur = 0;
    while cur < n {
        // find the next run of at least MIN_RUN equal bytes
        let mut beg = cur;
        let mut run = 0;
        while run < MIN_RUN && beg < n {
            beg += run;
            run = 1;
            while beg + run < n && run < 127 && data[beg + run] == data[beg] {
                run += 1;
            }
        }
        if run < MIN_RUN {
            beg = n;
        }
        // literals before the run
        while cur < beg {
            let count = (beg - cur).min(128);
            out.push(count as u8);
            out.extend_from_slice(&data[cur..cur + count]);
            cur += count;
        }
        if run >= MIN_RUN && beg < n {
            out.push(128 + run as u8);
            out.push(data[beg]);
            cur = beg + run;
        }
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Result<&'a str> {
        let start = self.pos;
        let rest = &self.data[start..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(start as u64, "unterminated header line"))?;
        self.pos += end + 1;
        std::str::from_utf8(&rest[..end])
            .map_err(|_| Error::parse(start as u64, "header is not valid text"))
    }

    fn byte(&mut self) -> Result<u8> {
        let b = *self
            .data
            .get(self.pos)
            .ok_or_else(|| Error::parse(self.pos as u64, "truncated pixel data"))?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::parse(self.data.len() as u64, "truncated pixel data"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

pub fn decode_hdr(bytes: &[u8]) -> Result<Image> {
    let mut cur = Cursor { data: bytes, pos: 0 };
    let magic = cur.line()?;
    if !magic.starts_with("#?") {
        return Err(Error::parse(0, "missing #? signature"));
    }
    loop {
        let at = cur.pos;
        let line = cur.line()?;
        if line.is_empty() {
            break;
        }
        if let Some(fmt) = line.strip_prefix("FORMAT=") {
            if fmt.trim() != "32-bit_rle_rgbe" {
                return Err(Error::parse(at as u64, format!("unsupported format {fmt}")));
            }
        }
    }
    let at = cur.pos;
    let res = cur.line()?;
    let parts: Vec<&str> = res.split_whitespace().collect();
    let (h, w) = match parts.as_slice() {
        ["-Y", h, "+X", w] => (
            h.parse::<usize>().map_err(|_| Error::parse(at as u64, "bad height"))?,
            w.parse::<usize>().map_err(|_| Error::parse(at as u64, "bad width"))?,
        ),
        _ => {
            return Err(Error::parse(
                at as u64,
                format!("unsupported resolution line {res:?}"),
            ))
        }
    };
    if w == 0 || h == 0 {
        return Err(Error::parse(at as u64, "empty image"));
    }
    let mut img = Image::new(w, h, 3);
    let mut scan = vec![[0u8; 4]; w];
    for y in 0..h {
        read_scanline(&mut cur, &mut scan)?;
        for (x, px) in scan.iter().enumerate() {
            img.pixel_mut(x, y).copy_from_slice(&rgbe_decode(*px));
        }
    }
    Ok(img)
}

fn read_scanline(cur: &mut Cursor, scan: &mut [[u8; 4]]) -> Result<()> {
    let w = scan.len();
    let start = cur.pos;
    let head = cur.take(4)?;
    let is_rle = (8..0x8000).contains(&w) && head[0] == 2 && head[1] == 2 && head[2] & 0x80 == 0;
    if !is_rle {
        cur.pos = start;
        return read_flat(cur, scan);
    }
    let declared = ((head[2] as usize) << 8) | head[3] as usize;
    if declared != w {
        return Err(Error::parse(start as u64, "scanline width mismatch"));
    }
    for c in 0..4 {
        let mut x = 0;
        while x < w {
            let at = cur.pos;
            let count = cur.byte()? as usize;
            if count > 128 {
                let n = count - 128;
                if x + n > w {
                    return Err(Error::parse(at as u64, "run overflows scanline"));
                }
                let v = cur.byte()?;
                for px in &mut scan[x..x + n] {
                    px[c] = v;
                }
                x += n;
            } else {
                if count == 0 || x + count > w {
                    return Err(Error::parse(at as u64, "bad literal count"));
                }
                let vals = cur.take(count)?;
                for (px, &v) in scan[x..x + count].iter_mut().zip(vals) {
                    px[c] = v;
                }
                x += count;
            }
        }
    }
    Ok(())
}

/// Flat pixels, also accepting the old `(1, 1, 1, n)` repeat convention.
fn read_flat(cur: &mut Cursor, scan: &mut [[u8; 4]]) -> Result<()> {
    let w = scan.len();
    let mut x = 0;
    let mut shift = 0;
    while x < w {
        let at = cur.pos;
        let p = cur.take(4)?;
        if p[0] == 1 && p[1] == 1 && p[2] == 1 {
            if x == 0 {
                return Err(Error::parse(at as u64, "repeat with no previous pixel"));
            }
            let n = (p[3] as usize) << shift;
            if x + n > w {
                return Err(Error::parse(at as u64, "repeat overflows scanline"));
            }
            let prev = scan[x - 1];
            for px in &mut scan[x..x + n] {
                *px = prev;
            }
            x += n;
            shift += 8;
        } else {
            scan[x] = [p[0], p[1], p[2], p[3]];
            x += 1;
            shift = 0;
        }
    }
    Ok(())
}

pub fn write_hdr(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    fs::write(path, encode_hdr(img)?)?;
    Ok(())
}

pub fn read_hdr(path: impl AsRef<Path>) -> Result<Image> {
    decode_hdr(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_pixel_bytes() {
        assert_eq!(rgbe_encode([1.0, 1.0, 1.0]).unwrap(), [128, 128, 128, 129]);
        assert_eq!(rgbe_encode([0.0; 3]).unwrap(), [0, 0, 0, 0]);
        assert_eq!(rgbe_decode([0, 0, 0, 0]), [0.0; 3]);
    }

    #[test]
    fn rle_and_flat_round_trip() {
        for w in [5usize, 40] {
            let img = Image::from_fn(w, 3, 3, |x, y, c| {
                let base = if x % 7 < 3 { 2.0 } else { 0.1 + (x * 3 + y) as f64 * 0.37 };
                base * (1.0 - 0.1 * c as f64)
            });
            let back = decode_hdr(&encode_hdr(&img).unwrap()).unwrap();
            for (a, b) in img.data().iter().zip(back.data()) {
                assert!((a - b).abs() <= 0.01 * a, "{a} {b}");
            }
        }
    }

    #[test]
    fn truncated_file_reports_offset() {
        let img = Image::filled(16, 2, 3, 0.5);
        let bytes = encode_hdr(&img).unwrap();
        let err = decode_hdr(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        let err = decode_hdr(b"P6\n").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 0, .. }));
    }
}
