//! Equirectangular panorama geometry.
//!
//! Conventions used throughout the crate:
//!
//! * continuous pixel coordinates `(u, v)` with pixel centers at half-integer
//!   offsets, `0 <= u < W`, `0 <= v <= H`;
//! * azimuth `φ = 2π·u/W − π` (0 at the image center), elevation
//!   `λ = π/2 − π·v/H` (zenith on the top row);
//! * directions `(cosλ·sinφ, sinλ, cosλ·cosφ)`: `+y` up, `+z` forward.
//!
//! Sampling is bilinear, wrapping in azimuth and clamping at the poles.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Whether pixel values are display-referred (`[0, 1]`) or linear radiance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DynamicRange {
    Ldr,
    Hdr,
}

/// An equirectangular image with `W = 2H`.
#[derive(Clone, Debug, PartialEq)]
pub struct Panorama {
    image: Image,
    range: DynamicRange,
}

impl Panorama {
    pub fn new(image: Image, range: DynamicRange) -> Result<Self> {
        if image.width() != 2 * image.height() || image.height() == 0 {
            return Err(Error::domain(format!(
                "panorama must be 2:1, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        if !matches!(image.channels(), 1 | 3) {
            return Err(Error::domain(format!(
                "panorama must have 1 or 3 channels, got {}",
                image.channels()
            )));
        }
        let ok = match range {
            DynamicRange::Ldr => image.data().iter().all(|v| (0.0..=1.0).contains(v)),
            DynamicRange::Hdr => image.data().iter().all(|v| v.is_finite() && *v >= 0.0),
        };
        if !ok {
            return Err(Error::domain(format!(
                "pixel values violate the {range:?} range"
            )));
        }
        Ok(Self { image, range })
    }

    /// Wraps an image already known to satisfy the invariants (resampled
    /// from a valid panorama).
    pub(crate) fn derived(image: Image, range: DynamicRange) -> Self {
        debug_assert_eq!(image.width(), 2 * image.height());
        Self { image, range }
    }

    pub fn image(&self) -> &Image {
        &self.image
    }

    pub fn into_image(self) -> Image {
        self.image
    }

    pub fn range(&self) -> DynamicRange {
        self.range
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn channels(&self) -> usize {
        self.image.channels()
    }

    pub fn to_gray(&self) -> Panorama {
        Panorama::derived(self.image.to_gray(), self.range)
    }
}

/// Unit vector on the sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Direction {
    pub const FORWARD: Direction = Direction { x: 0.0, y: 0.0, z: 1.0 };
    pub const UP: Direction = Direction { x: 0.0, y: 1.0, z: 0.0 };
    pub const DOWN: Direction = Direction { x: 0.0, y: -1.0, z: 0.0 };

    /// Normalizes `(x, y, z)`; returns `None` for the zero vector.
    pub fn new(x: f64, y: f64, z: f64) -> Option<Direction> {
        let n = (x * x + y * y + z * z).sqrt();
        if n == 0.0 || !n.is_finite() {
            return None;
        }
        Some(Direction {
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    pub fn from_angles(azimuth: f64, elevation: f64) -> Direction {
        let (sl, cl) = elevation.sin_cos();
        let (sp, cp) = azimuth.sin_cos();
        Direction {
            x: cl * sp,
            y: sl,
            z: cl * cp,
        }
    }

    #[inline]
    pub fn dot(&self, o: &Direction) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Angle to `o` in radians, stable for nearly parallel vectors.
    pub fn angle_to(&self, o: &Direction) -> f64 {
        let cx = self.y * o.z - self.z * o.y;
        let cy = self.z * o.x - self.x * o.z;
        let cz = self.x * o.y - self.y * o.x;
        let cross = (cx * cx + cy * cy + cz * cz).sqrt();
        cross.atan2(self.dot(o))
    }

    pub fn azimuth(&self) -> f64 {
        self.x.atan2(self.z)
    }

    pub fn elevation(&self) -> f64 {
        self.y.clamp(-1.0, 1.0).asin()
    }

    /// Rotation about `+y` taking azimuth `φ` to `φ + angle`.
    #[inline]
    pub fn rotate_yaw(&self, angle: f64) -> Direction {
        let (s, c) = angle.sin_cos();
        Direction {
            x: self.x * c + self.z * s,
            y: self.y,
            z: -self.x * s + self.z * c,
        }
    }

    /// Rotation about `+x` tilting the forward axis up by `angle`.
    #[inline]
    pub fn rotate_pitch(&self, angle: f64) -> Direction {
        let (s, c) = angle.sin_cos();
        Direction {
            x: self.x,
            y: self.y * c + self.z * s,
            z: -self.y * s + self.z * c,
        }
    }
}

/// Maps continuous pixel coordinates to a direction.
pub fn pixel_to_dir(u: f64, v: f64, width: usize, height: usize) -> Result<Direction> {
    if !(0.0..width as f64).contains(&u) || !(0.0..height as f64).contains(&v) {
        return Err(Error::domain(format!(
            "pixel ({u}, {v}) outside {width}x{height}"
        )));
    }
    Ok(pixel_to_dir_unchecked(u, v, width, height))
}

#[inline]
pub(crate) fn pixel_to_dir_unchecked(u: f64, v: f64, width: usize, height: usize) -> Direction {
    let azimuth = TAU * u / width as f64 - PI;
    let elevation = FRAC_PI_2 - PI * v / height as f64;
    Direction::from_angles(azimuth, elevation)
}

/// Direction of the center of integer pixel `(x, y)`.
#[inline]
pub fn pixel_center_dir(x: usize, y: usize, width: usize, height: usize) -> Direction {
    pixel_to_dir_unchecked(x as f64 + 0.5, y as f64 + 0.5, width, height)
}

/// Inverse of [`pixel_to_dir`]. Poles map to `u = W/2`.
pub fn dir_to_pixel(d: &Direction, width: usize, height: usize) -> (f64, f64) {
    let w = width as f64;
    let h = height as f64;
    let horiz = d.x.hypot(d.z);
    let elevation = d.y.atan2(horiz);
    let v = (FRAC_PI_2 - elevation) * h / PI;
    if horiz <= 1e-15 {
        return (w / 2.0, v);
    }
    let mut u = (d.azimuth() + PI) * w / TAU;
    if u >= w {
        u -= w;
    }
    if u < 0.0 {
        u += w;
    }
    (u, v)
}

/// Per-pixel solid angles of an equirectangular grid, one value per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SolidAngleMap {
    width: usize,
    height: usize,
    rows: Vec<f64>,
}

impl SolidAngleMap {
    #[inline]
    pub fn get(&self, _x: usize, y: usize) -> f64 {
        self.rows[y]
    }

    #[inline]
    pub fn row(&self, y: usize) -> f64 {
        self.rows[y]
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn total(&self) -> f64 {
        self.rows.iter().sum::<f64>() * self.width as f64
    }

    pub fn mean(&self) -> f64 {
        self.rows.iter().sum::<f64>() / self.height as f64
    }

    pub fn to_image(&self) -> Image {
        Image::from_fn(self.width, self.height, 1, |_, y, _| self.rows[y])
    }
}

/// `s = (2π/W)·(sin λ_top − sin λ_bottom)` from the row edge elevations.
pub fn solid_angles(width: usize, height: usize) -> Result<SolidAngleMap> {
    if width != 2 * height || height == 0 {
        return Err(Error::domain(format!(
            "solid angles need a 2:1 grid, got {width}x{height}"
        )));
    }
    let dphi = TAU / width as f64;
    let rows = (0..height)
        .map(|y| {
            let top = FRAC_PI_2 - PI * y as f64 / height as f64;
            let bottom = FRAC_PI_2 - PI * (y + 1) as f64 / height as f64;
            dphi * (top.sin() - bottom.sin())
        })
        .collect();
    Ok(SolidAngleMap {
        width,
        height,
        rows,
    })
}

/// Bilinear sample at continuous coordinates, wrapping in `u` and clamping
/// in `v`. Writes `img.channels()` values into `out`.
#[inline]
pub fn sample_bilinear(img: &Image, u: f64, v: f64, out: &mut [f64]) {
    let w = img.width() as isize;
    let h = img.height() as isize;
    let x = u - 0.5;
    let y = v - 0.5;
    let x0f = x.floor();
    let y0f = y.floor();
    let fx = x - x0f;
    let fy = y - y0f;
    let x0 = (x0f as isize).rem_euclid(w) as usize;
    let x1 = (x0f as isize + 1).rem_euclid(w) as usize;
    let y0 = (y0f as isize).clamp(0, h - 1) as usize;
    let y1 = (y0f as isize + 1).clamp(0, h - 1) as usize;
    let p00 = img.pixel(x0, y0);
    let p10 = img.pixel(x1, y0);
    let p01 = img.pixel(x0, y1);
    let p11 = img.pixel(x1, y1);
    for c in 0..img.channels() {
        let top = p00[c] + (p10[c] - p00[c]) * fx;
        let bottom = p01[c] + (p11[c] - p01[c]) * fx;
        out[c] = top + (bottom - top) * fy;
    }
}

/// Bilinear sample of an equirectangular image along direction `d`.
#[inline]
pub fn sample_dir(img: &Image, d: &Direction, out: &mut [f64]) {
    let (u, v) = dir_to_pixel(d, img.width(), img.height());
    sample_bilinear(img, u, v, out);
}

/// Resamples an equirectangular image: output pixel `(x, y)` takes the
/// value of `img` along `map(direction of (x, y))`.
pub(crate) fn remap(
    img: &Image,
    width: usize,
    height: usize,
    map: impl Fn(Direction) -> Direction + Sync,
) -> Image {
    let c = img.channels();
    let mut out = Image::new(width, height, c);
    out.data_mut()
        .par_chunks_mut(width * c)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..width {
                let d = pixel_center_dir(x, y, width, height);
                sample_dir(img, &map(d), &mut row[x * c..(x + 1) * c]);
            }
        });
    out
}

/// A virtual pinhole camera looking into the panorama.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropSpec {
    /// Radians in `[-π, π)`.
    pub azimuth: f64,
    /// Radians in `[-π/2, π/2]`.
    pub elevation: f64,
    /// Horizontal field of view, radians in `(0, π)`.
    pub hfov: f64,
    pub width: usize,
    pub height: usize,
}

impl CropSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.hfov > 0.0 && self.hfov < PI) {
            return Err(Error::domain(format!(
                "horizontal fov must lie in (0, π), got {}",
                self.hfov
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::domain("crop dimensions must be at least 1"));
        }
        if !(-FRAC_PI_2..=FRAC_PI_2).contains(&self.elevation) || !self.azimuth.is_finite() {
            return Err(Error::domain("crop orientation out of range"));
        }
        Ok(())
    }

    pub fn focal(&self) -> f64 {
        self.width as f64 / 2.0 / (self.hfov / 2.0).tan()
    }

    pub fn vfov(&self) -> f64 {
        2.0 * ((self.hfov / 2.0).tan() * self.height as f64 / self.width as f64).atan()
    }

    /// World direction of the ray through continuous crop coordinates.
    pub fn ray(&self, x: f64, y: f64) -> Direction {
        let f = self.focal();
        let cam = Direction::new(
            (x - self.width as f64 / 2.0) / f,
            -(y - self.height as f64 / 2.0) / f,
            1.0,
        )
        .expect("pinhole ray is never zero");
        cam.rotate_pitch(self.elevation).rotate_yaw(self.azimuth)
    }

    /// Projects a world direction into crop coordinates; `None` behind the
    /// camera.
    pub fn project(&self, d: &Direction) -> Option<(f64, f64)> {
        let cam = d.rotate_yaw(-self.azimuth).rotate_pitch(-self.elevation);
        if cam.z <= 1e-12 {
            return None;
        }
        let f = self.focal();
        Some((
            self.width as f64 / 2.0 + f * cam.x / cam.z,
            self.height as f64 / 2.0 - f * cam.y / cam.z,
        ))
    }
}

/// Rectilinear crop of a panorama.
pub fn extract_crop(p: &Panorama, spec: &CropSpec) -> Result<Image> {
    spec.validate()?;
    let src = p.image();
    let c = src.channels();
    let mut out = Image::new(spec.width, spec.height, c);
    for y in 0..spec.height {
        for x in 0..spec.width {
            let d = spec.ray(x as f64 + 0.5, y as f64 + 0.5);
            sample_dir(src, &d, out.pixel_mut(x, y));
        }
    }
    Ok(out)
}

/// Circular column shift by `delta·W/2π`; integer shifts are exact copies.
pub fn rotate_azimuth_map(m: &Image, delta: f64) -> Image {
    let w = m.width();
    let shift = delta * w as f64 / TAU;
    let rounded = shift.round();
    if (shift - rounded).abs() < 1e-9 {
        let k = (rounded as i64).rem_euclid(w as i64) as usize;
        let c = m.channels();
        let mut out = Image::new(w, m.height(), c);
        for y in 0..m.height() {
            for x in 0..w {
                let sx = (x + w - k) % w;
                out.pixel_mut(x, y).copy_from_slice(m.pixel(sx, y));
            }
        }
        return out;
    }
    let c = m.channels();
    let mut out = Image::new(w, m.height(), c);
    for y in 0..m.height() {
        for x in 0..w {
            let u = x as f64 + 0.5 - shift;
            sample_bilinear(m, u, y as f64 + 0.5, out.pixel_mut(x, y));
        }
    }
    out
}

pub fn rotate_azimuth(p: &Panorama, delta: f64) -> Panorama {
    Panorama::derived(rotate_azimuth_map(p.image(), delta), p.range())
}

/// Maps a direction of the pitch-rotated frame to the original frame.
#[inline]
pub fn pitch90_to_original(d: Direction) -> Direction {
    Direction {
        x: d.x,
        y: d.z,
        z: -d.y,
    }
}

/// Maps a direction of the original frame to the pitch-rotated frame.
#[inline]
pub fn original_to_pitch90(d: Direction) -> Direction {
    Direction {
        x: d.x,
        y: -d.z,
        z: d.y,
    }
}

/// Resamples so the original zenith lands on the horizon line (at the
/// image center).
pub fn rotate_pitch90_map(m: &Image) -> Image {
    remap(m, m.width(), m.height(), pitch90_to_original)
}

/// Undoes [`rotate_pitch90_map`] up to interpolation error.
pub fn rotate_pitch90_inverse_map(m: &Image) -> Image {
    remap(m, m.width(), m.height(), original_to_pitch90)
}

pub fn rotate_pitch90(p: &Panorama) -> Panorama {
    Panorama::derived(rotate_pitch90_map(p.image()), p.range())
}

pub fn rotate_pitch90_inverse(p: &Panorama) -> Panorama {
    Panorama::derived(rotate_pitch90_inverse_map(p.image()), p.range())
}

/// Box-filter resize with exact fractional pixel coverage.
pub fn resize_area(img: &Image, width: usize, height: usize) -> Image {
    let c = img.channels();
    let horizontal = box_weights(img.width(), width);
    let vertical = box_weights(img.height(), height);
    let mut tmp = Image::new(width, img.height(), c);
    for y in 0..img.height() {
        for (x, taps) in horizontal.iter().enumerate() {
            let out = tmp.pixel_mut(x, y);
            for &(sx, wgt) in taps {
                let p = img.pixel(sx, y);
                for k in 0..c {
                    out[k] += wgt * p[k];
                }
            }
        }
    }
    let mut out = Image::new(width, height, c);
    for (y, taps) in vertical.iter().enumerate() {
        for x in 0..width {
            for &(sy, wgt) in taps {
                for k in 0..c {
                    let v = tmp.get(x, sy, k);
                    let i = out.index(x, y) + k;
                    out.data_mut()[i] += wgt * v;
                }
            }
        }
    }
    out
}

fn box_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let lo = i as f64 * scale;
            let hi = (i + 1) as f64 * scale;
            let mut taps = Vec::new();
            let mut j = lo.floor() as usize;
            while (j as f64) < hi && j < src {
                let overlap = (hi.min((j + 1) as f64) - lo.max(j as f64)).max(0.0);
                if overlap > 0.0 {
                    taps.push((j, overlap / scale));
                }
                j += 1;
            }
            taps
        })
        .collect()
}

/// Solid-angle weighted mean direction of a nonnegative map (first
/// channel). `None` if the map has no mass or the mean cancels out.
pub fn mean_direction(map: &Image) -> Option<Direction> {
    let (w, h) = map.dims();
    let s = solid_angles(w, h).ok()?;
    let (mut x, mut y, mut z) = (0.0, 0.0, 0.0);
    for py in 0..h {
        for px in 0..w {
            let m = map.get(px, py, 0).max(0.0) * s.row(py);
            if m > 0.0 {
                let d = pixel_center_dir(px, py, w, h);
                x += m * d.x;
                y += m * d.y;
                z += m * d.z;
            }
        }
    }
    Direction::new(x, y, z)
}
