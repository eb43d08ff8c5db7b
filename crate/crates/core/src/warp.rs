//! Recentering warp: resamples a panorama as seen from a virtual camera
//! displaced inside the unit sphere toward the photographed scene.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{remap, CropSpec, Direction, Panorama};
use crate::image::Image;

/// Largest supported displacement angle (75°).
pub const BETA_MAX: f64 = 75.0 * std::f64::consts::PI / 180.0;

/// Surfaces whose normal is within this angle of `+y` count as flat.
pub const FLAT_ANGLE: f64 = FRAC_PI_6;

/// Minimum flat region size as a fraction of the crop area.
pub const MIN_FLAT_FRACTION: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarpParams {
    pub beta: f64,
    pub axis_azimuth: f64,
}

impl WarpParams {
    pub fn new(beta: f64, axis_azimuth: f64) -> Result<Self> {
        if !(0.0..=BETA_MAX).contains(&beta) {
            return Err(Error::domain(format!(
                "beta must lie in [0, {BETA_MAX}], got {beta}"
            )));
        }
        if !axis_azimuth.is_finite() {
            return Err(Error::domain("axis azimuth must be finite"));
        }
        Ok(Self { beta, axis_azimuth })
    }

    pub fn identity() -> Self {
        Self {
            beta: 0.0,
            axis_azimuth: 0.0,
        }
    }
}

/// Intersects the ray `v` cast from `(0, 0, sin β)` with the unit sphere.
///
/// Returns the ray length `t` and the hit point, which is the direction to
/// sample in the original panorama.
pub fn recenter_ray(v: &Direction, beta: f64) -> Result<(f64, Direction)> {
    let s = beta.sin();
    if !(s.abs() < 1.0) {
        return Err(Error::domain(format!("sin(beta) must be < 1, got {s}")));
    }
    let t = positive_root(v.z * s, 1.0 - s * s);
    let src = Direction {
        x: v.x * t,
        y: v.y * t,
        z: v.z * t + s,
    };
    Ok((t, src))
}

/// Nonnegative root of `t² + 2bt − c = 0` for `c > 0`, without cancellation.
#[inline]
fn positive_root(b: f64, c: f64) -> f64 {
    let disc = (b * b + c).sqrt();
    if b > 0.0 {
        c / (b + disc)
    } else {
        disc - b
    }
}

/// Both roots of the same quadratic, for diagnostics and tests.
pub fn recenter_roots(v: &Direction, beta: f64) -> (f64, f64) {
    let s = beta.sin();
    let b = v.z * s;
    let c = 1.0 - s * s;
    let disc = (b * b + c).sqrt();
    let pos = positive_root(b, c);
    let neg = if b > 0.0 { -b - disc } else { -c / pos };
    (neg, pos)
}

/// Maps a direction of the warped output to the original panorama.
#[inline]
pub fn warp_source(v: &Direction, params: &WarpParams) -> Direction {
    let canonical = v.rotate_yaw(-params.axis_azimuth);
    let s = params.beta.sin();
    let t = positive_root(canonical.z * s, 1.0 - s * s);
    let src = Direction {
        x: canonical.x * t,
        y: canonical.y * t,
        z: canonical.z * t + s,
    };
    src.rotate_yaw(params.axis_azimuth)
}

pub fn recenter_map(m: &Image, params: &WarpParams) -> Result<Image> {
    WarpParams::new(params.beta, params.axis_azimuth)?;
    if params.beta == 0.0 {
        return Ok(m.clone());
    }
    let p = *params;
    Ok(remap(m, m.width(), m.height(), move |d| warp_source(&d, &p)))
}

/// Warps a panorama. `β = 0` returns an exact copy.
pub fn recenter_pano(p: &Panorama, params: &WarpParams) -> Result<Panorama> {
    let img = recenter_map(p.image(), params)?;
    Ok(Panorama::derived(img, p.range()))
}

/// Chooses the warp from per-pixel surface normals of a crop.
///
/// The lowest pixel of the largest flat region is back-projected through
/// the crop camera; β is the absolute elevation of that ray.
pub fn select_beta(normals: &Image, spec: &CropSpec) -> Result<WarpParams> {
    spec.validate()?;
    if normals.width() != spec.width || normals.height() != spec.height || normals.channels() != 3 {
        return Err(Error::dims(format!(
            "normals {}x{}x{} do not match crop {}x{}",
            normals.width(),
            normals.height(),
            normals.channels(),
            spec.width,
            spec.height
        )));
    }
    let (w, h) = (spec.width, spec.height);
    let cos_flat = FLAT_ANGLE.cos();
    let flat: Vec<bool> = normals
        .data()
        .chunks_exact(3)
        .map(|n| {
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            len > 0.0 && n[1] / len > cos_flat
        })
        .collect();

    let mut label = vec![usize::MAX; w * h];
    let mut best: Option<Region> = None;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !flat[start] || label[start] != usize::MAX {
            continue;
        }
        let id = start;
        label[start] = id;
        queue.push_back(start);
        let mut region = Region::default();
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            region.add(x, y);
            let mut visit = |j: usize| {
                if flat[j] && label[j] == usize::MAX {
                    label[j] = id;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if best.as_ref().is_none_or(|b| region.beats(b)) {
            best = Some(region);
        }
    }

    let Some(region) = best else {
        return WarpParams::new(0.0, spec.azimuth);
    };
    if (region.size as f64) < MIN_FLAT_FRACTION * (w * h) as f64 {
        return WarpParams::new(0.0, spec.azimuth);
    }
    let (x, y) = region.lowest_pixel();
    let ray = spec.ray(x as f64 + 0.5, y as f64 + 0.5);
    let beta = ray.elevation().abs().min(BETA_MAX);
    WarpParams::new(beta, spec.azimuth)
}

#[derive(Default)]
struct Region {
    size: usize,
    row_sum: usize,
    lowest_row: usize,
    lowest_cols: Vec<usize>,
}

impl Region {
    fn add(&mut self, x: usize, y: usize) {
        if self.size == 0 || y > self.lowest_row {
            self.lowest_row = y;
            self.lowest_cols.clear();
        }
        if y == self.lowest_row {
            self.lowest_cols.push(x);
        }
        self.size += 1;
        self.row_sum += y;
    }

    /// Larger wins; equal sizes go to the region whose centroid is lower.
    fn beats(&self, other: &Region) -> bool {
        if self.size != other.size {
            return self.size > other.size;
        }
        // compare row_sum/size without division; sizes are equal here
        self.row_sum > other.row_sum
    }

    /// Median column of the lowest row.
    fn lowest_pixel(&self) -> (usize, usize) {
        let mut cols = self.lowest_cols.clone();
        cols.sort_unstable();
        (cols[(cols.len() - 1) / 2], self.lowest_row)
    }
}

/// Angle between the warped nadir and the original nadir. Equals β.
pub fn nadir_source_distance(params: &WarpParams) -> f64 {
    warp_source(&Direction::DOWN, params).angle_to(&Direction::DOWN)
}

/// Where the original nadir lands in the warped view, measured from the
/// warped nadir: `atan(sin β)`.
pub fn nadir_image_distance(beta: f64) -> f64 {
    beta.sin().atan().min(FRAC_PI_2)
}
