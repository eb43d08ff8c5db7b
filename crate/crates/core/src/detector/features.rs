//! Patch features: HOG on a canonical 32×32 resampling plus elevation and
//! raw intensity statistics.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pitch90_to_original, pixel_to_dir_unchecked, Panorama};
use crate::image::Image;

pub const SCALES: usize = 5;
pub const BASE_SIDE: f64 = 30.0;
/// Windows never extend below this fraction of the image height.
pub const BOTTOM_EXCLUSION: f64 = 0.15;
/// Gradients below this are summed-area roundoff, not image structure.
const GRAD_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HogConfig {
    pub patch: usize,
    pub cell: usize,
    pub bins: usize,
    pub eps: f64,
}

impl Default for HogConfig {
    fn default() -> Self {
        Self {
            patch: 32,
            cell: 8,
            bins: 9,
            eps: 1e-6,
        }
    }
}

impl HogConfig {
    pub fn cells(&self) -> usize {
        self.patch / self.cell
    }

    pub fn hog_dim(&self) -> usize {
        let blocks = self.cells() - 1;
        blocks * blocks * 4 * self.bins
    }

    pub fn feature_dim(&self) -> usize {
        self.hog_dim() + 4
    }

    pub fn validate(&self) -> Result<()> {
        if self.cell == 0 || self.patch % self.cell != 0 || self.patch / self.cell < 2 || self.bins == 0 {
            return Err(Error::domain("HOG patch must hold at least 2x2 whole cells"));
        }
        Ok(())
    }
}

/// First image row excluded from detection.
pub fn cutoff_row(height: usize) -> usize {
    ((1.0 - BOTTOM_EXCLUSION) * height as f64).round() as usize
}

pub fn patch_side(scale_index: usize) -> usize {
    (BASE_SIDE * 1.5f64.powi(scale_index as i32)).round() as usize
}

/// Square window; `center` is in continuous pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub center: (f64, f64),
    pub side: usize,
    pub scale_index: usize,
}

impl PatchSpec {
    pub fn new(center: (f64, f64), scale_index: usize) -> Self {
        Self {
            center,
            side: patch_side(scale_index),
            scale_index,
        }
    }

    /// Top-left corner in continuous coordinates.
    pub fn origin(&self) -> (f64, f64) {
        let half = self.side as f64 / 2.0;
        (self.center.0 - half, self.center.1 - half)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub hog: Vec<f64>,
    pub mean_elevation: f64,
    pub mean: f64,
    pub std: f64,
    pub p99: f64,
}

impl FeatureVector {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.hog.clone();
        v.extend_from_slice(&[self.mean_elevation, self.mean, self.std, self.p99]);
        v
    }
}

/// Grayscale panorama prepared for repeated patch queries: a summed-area
/// table extended past the right edge so windows can wrap in azimuth.
pub struct PatchSampler<'a> {
    gray: &'a Image,
    sat: Vec<f64>,
    sat_w: usize,
    rotated: bool,
    hog: HogConfig,
}

impl<'a> PatchSampler<'a> {
    /// `rotated` marks a pitch-rotated panorama; elevations are then
    /// reported in the original frame.
    pub fn new(gray: &'a Image, rotated: bool, hog: HogConfig) -> Result<Self> {
        if gray.channels() != 1 {
            return Err(Error::domain("patch features need a grayscale image"));
        }
        hog.validate()?;
        let (w, h) = gray.dims();
        let ext = w + patch_side(SCALES - 1) + 2;
        let sat_w = ext + 1;
        let mut sat = vec![0.0; sat_w * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..ext {
                row += gray.get(x % w, y, 0);
                sat[(y + 1) * sat_w + x + 1] = sat[y * sat_w + x + 1] + row;
            }
        }
        Ok(Self {
            gray,
            sat,
            sat_w,
            rotated,
            hog,
        })
    }

    /// Integral over `[0, x] × [0, y]`, exact for the piecewise-constant
    /// image at fractional coordinates.
    fn integral(&self, x: f64, y: f64) -> f64 {
        let x0 = (x.floor() as usize).min(self.sat_w - 2);
        let y0 = (y.floor() as usize).min(self.gray.height() - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let s = |i: usize, j: usize| self.sat[j * self.sat_w + i];
        let top = s(x0, y0) + (s(x0 + 1, y0) - s(x0, y0)) * fx;
        let bottom = s(x0, y0 + 1) + (s(x0 + 1, y0 + 1) - s(x0, y0 + 1)) * fx;
        top + (bottom - top) * fy
    }

    fn check(&self, patch: &PatchSpec) -> Result<(f64, f64)> {
        if patch.side < 4 {
            return Err(Error::domain(format!("patch side {} is below 4 px", patch.side)));
        }
        let (w, h) = self.gray.dims();
        let (u0, v0) = patch.origin();
        if v0 < -1e-9 || v0 + patch.side as f64 > h as f64 + 1e-9 || patch.side > w {
            return Err(Error::domain("patch leaves the panorama vertically"));
        }
        Ok((u0.rem_euclid(w as f64), v0.max(0.0)))
    }

    /// Box-averaged `patch × patch` resampling of the window.
    pub fn resample(&self, patch: &PatchSpec) -> Result<Vec<f64>> {
        let (u0, v0) = self.check(patch)?;
        let n = self.hog.patch;
        let step = patch.side as f64 / n as f64;
        let area = step * step;
        let xs: Vec<f64> = (0..=n).map(|i| u0 + i as f64 * step).collect();
        let ys: Vec<f64> = (0..=n)
            .map(|j| (v0 + j as f64 * step).min(self.gray.height() as f64))
            .collect();
        let mut grid = vec![0.0; (n + 1) * (n + 1)];
        for (j, &y) in ys.iter().enumerate() {
            for (i, &x) in xs.iter().enumerate() {
                grid[j * (n + 1) + i] = self.integral(x, y);
            }
        }
        let mut out = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                let g = |a: usize, b: usize| grid[b * (n + 1) + a];
                out[j * n + i] = (g(i + 1, j + 1) - g(i, j + 1) - g(i + 1, j) + g(i, j)) / area;
            }
        }
        Ok(out)
    }

    /// Raw pixels whose centers fall inside the window.
    fn raw_pixels(&self, patch: &PatchSpec, u0: f64, v0: f64) -> Vec<f64> {
        let (w, h) = self.gray.dims();
        let x0 = (u0 - 0.5).ceil() as isize;
        let y0 = ((v0 - 0.5).ceil().max(0.0)) as usize;
        let y1 = (((v0 + patch.side as f64 - 0.5).ceil()) as usize).min(h);
        let mut out = Vec::with_capacity(patch.side * patch.side);
        for y in y0..y1 {
            for k in 0..patch.side as isize {
                let x = (x0 + k).rem_euclid(w as isize) as usize;
                out.push(self.gray.get(x, y, 0));
            }
        }
        out
    }

    pub fn features(&self, patch: &PatchSpec) -> Result<FeatureVector> {
        let (u0, v0) = self.check(patch)?;
        let canon = self.resample(patch)?;
        let hog = hog_descriptor(&canon, &self.hog);
        let mut raw = self.raw_pixels(patch, u0, v0);
        if raw.is_empty() {
            raw = canon;
        }
        let n = raw.len() as f64;
        let mean = raw.iter().sum::<f64>() / n;
        let var = raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let p99 = select_percentile(&mut raw, 0.99);
        let (w, h) = self.gray.dims();
        let cu = patch.center.0.rem_euclid(w as f64);
        let cv = patch.center.1.clamp(0.0, h as f64 - 1e-9);
        let mean_elevation = if self.rotated {
            let d = pitch90_to_original(pixel_to_dir_unchecked(cu, cv, w, h));
            d.elevation()
        } else {
            FRAC_PI_2 - PI * cv / h as f64
        };
        Ok(FeatureVector {
            hog,
            mean_elevation,
            mean,
            std: var.max(0.0).sqrt(),
            p99,
        })
    }
}

/// Linear-interpolated percentile via selection, `O(n)`.
fn select_percentile(values: &mut [f64], q: f64) -> f64 {
    let pos = q * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    let (_, lo_val, upper) = values.select_nth_unstable_by(lo, |a, b| a.total_cmp(b));
    let lo_val = *lo_val;
    if frac == 0.0 || upper.is_empty() {
        return lo_val;
    }
    let hi_val = upper.iter().copied().fold(f64::INFINITY, f64::min);
    lo_val + (hi_val - lo_val) * frac
}

/// HOG of a square `cfg.patch`-sided patch: centered `[-1, 0, 1]`
/// gradients with replicated borders, unsigned orientation bins centered
/// at multiples of `180°/bins` with linear vote splitting, 2×2-cell blocks
/// at stride one, each normalized by `sqrt(|v|² + ε²)`.
pub fn hog_descriptor(patch: &[f64], cfg: &HogConfig) -> Vec<f64> {
    let n = cfg.patch;
    let cells = cfg.cells();
    let bins = cfg.bins;
    let mut hist = vec![0.0; cells * cells * bins];
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, n as isize - 1) as usize;
        let y = y.clamp(0, n as isize - 1) as usize;
        patch[y * n + x]
    };
    let bin_width = PI / bins as f64;
    for y in 0..n {
        for x in 0..n {
            let (xi, yi) = (x as isize, y as isize);
            let gx = at(xi + 1, yi) - at(xi - 1, yi);
            let gy = at(xi, yi + 1) - at(xi, yi - 1);
            let mag = gx.hypot(gy);
            if mag < GRAD_FLOOR {
                continue;
            }
            let theta = gy.atan2(gx).rem_euclid(PI);
            let pos = theta / bin_width;
            let lo = pos.floor();
            let frac = pos - lo;
            let b0 = (lo as usize) % bins;
            let b1 = (b0 + 1) % bins;
            let cell = (y / cfg.cell) * cells + x / cfg.cell;
            hist[cell * bins + b0] += mag * (1.0 - frac);
            hist[cell * bins + b1] += mag * frac;
        }
    }
    let mut out = Vec::with_capacity(cfg.hog_dim());
    for by in 0..cells - 1 {
        for bx in 0..cells - 1 {
            let start = out.len();
            for (cy, cx) in [(by, bx), (by, bx + 1), (by + 1, bx), (by + 1, bx + 1)] {
                let c = cy * cells + cx;
                out.extend_from_slice(&hist[c * bins..(c + 1) * bins]);
            }
            let norm = (out[start..].iter().map(|v| v * v).sum::<f64>() + cfg.eps * cfg.eps).sqrt();
            for v in &mut out[start..] {
                *v /= norm;
            }
        }
    }
    out
}

/// Features of one patch of a grayscale panorama.
pub fn extract_patch_features(gray: &Panorama, patch: &PatchSpec) -> Result<FeatureVector> {
    if gray.channels() != 1 {
        return Err(Error::domain("extract_patch_features expects a grayscale panorama"));
    }
    PatchSampler::new(gray.image(), false, HogConfig::default())?.features(patch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sides_follow_the_scale_ladder() {
        let sides: Vec<usize> = (0..SCALES).map(patch_side).collect();
        assert_eq!(sides, vec![30, 45, 68, 101, 152]);
    }

    #[test]
    fn dims() {
        let c = HogConfig::default();
        assert_eq!(c.hog_dim(), 324);
        assert_eq!(c.feature_dim(), 328);
    }

    #[test]
    fn resample_of_constant_is_constant() {
        let img = Image::filled(64, 32, 1, 0.3);
        let s = PatchSampler::new(&img, false, HogConfig::default()).unwrap();
        let r = s.resample(&PatchSpec::new((2.0, 16.0), 0)).unwrap();
        assert!(r.iter().all(|v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn select_percentile_matches_sort() {
        let mut a: Vec<f64> = (0..157).map(|i| ((i * 37) % 101) as f64).collect();
        let mut b = a.clone();
        let q = select_percentile(&mut a, 0.99);
        assert_eq!(q, crate::image::percentile(&mut b, 0.99));
    }
}
