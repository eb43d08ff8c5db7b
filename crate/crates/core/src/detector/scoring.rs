//! Sliding-window scoring on the panorama and its pitch-rotated copy.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;

use super::classifier::ClassifierModel;
use super::features::{cutoff_row, patch_side, HogConfig, PatchSampler, PatchSpec, SCALES};
use crate::dataset::tonemap;
use crate::error::{Error, Result};
use crate::geometry::{resize_area, rotate_pitch90_inverse_map, rotate_pitch90_map, DynamicRange, Panorama};
use crate::image::Image;

/// Width at which detection runs.
pub const DETECT_WIDTH: usize = 512;

/// Tone-mapped (for HDR input) grayscale copy at detection resolution.
pub fn detection_gray(p: &Panorama) -> Image {
    let ldr = match p.range() {
        DynamicRange::Ldr => p.image().clone(),
        DynamicRange::Hdr => tonemap(p.image()),
    };
    let gray = ldr.to_gray();
    if gray.width() == DETECT_WIDTH {
        gray
    } else {
        resize_area(&gray, DETECT_WIDTH, DETECT_WIDTH / 2)
    }
}

/// Window grid: stride of half the side, wrapping in azimuth, rows kept
/// above `max_row`.
pub fn window_grid(width: usize, max_row: usize) -> Vec<PatchSpec> {
    let mut out = Vec::new();
    for k in 0..SCALES {
        let side = patch_side(k);
        let stride = (side / 2).max(1);
        if side > max_row || side > width {
            continue;
        }
        let cols = width.div_ceil(stride);
        let mut y0 = 0;
        while y0 + side <= max_row {
            for i in 0..cols {
                let x0 = i * stride;
                out.push(PatchSpec {
                    center: (x0 as f64 + side as f64 / 2.0, y0 as f64 + side as f64 / 2.0),
                    side,
                    scale_index: k,
                });
            }
            y0 += stride;
        }
    }
    out
}

/// Both window grids of a panorama: the upright one stays above the
/// bottom exclusion band, the rotated one covers the full height.
pub fn panorama_windows(width: usize, height: usize) -> (Vec<PatchSpec>, Vec<PatchSpec>) {
    (window_grid(width, cutoff_row(height)), window_grid(width, height))
}

/// Feature vectors of all windows, in order.
pub fn window_features(gray: &Image, rotated: bool, windows: &[PatchSpec], hog: HogConfig) -> Result<Vec<Vec<f64>>> {
    let sampler = PatchSampler::new(gray, rotated, hog)?;
    windows
        .par_iter()
        .map(|w| sampler.features(w).map(|f| f.to_vec()))
        .collect()
}

/// Integer pixel span `[x0, x0 + side) × [y0, y1)` covered by a window.
pub(crate) fn window_span(w: &PatchSpec, height: usize) -> (isize, usize, usize) {
    let (u0, v0) = w.origin();
    let x0 = (u0 - 0.5).ceil() as isize;
    let y0 = (v0 - 0.5).ceil().max(0.0) as usize;
    let y1 = ((v0 + w.side as f64 - 0.5).ceil() as usize).min(height);
    (x0, y0, y1)
}

/// Mean of window values over the windows covering each pixel; pixels no
/// window covers get 0.
pub fn rasterize(windows: &[PatchSpec], values: &[f64], width: usize, height: usize) -> Image {
    let mut sum = vec![0.0; (width + 1) * height];
    let mut count = vec![0.0; (width + 1) * height];
    for (win, &v) in windows.iter().zip(values) {
        let (x0, y0, y1) = window_span(win, height);
        let start = x0.rem_euclid(width as isize) as usize;
        let end = start + win.side;
        let mut spans = vec![(start, end.min(width))];
        if end > width {
            spans.push((0, end - width));
        }
        for y in y0..y1 {
            for &(a, b) in &spans {
                sum[y * (width + 1) + a] += v;
                sum[y * (width + 1) + b] -= v;
                count[y * (width + 1) + a] += 1.0;
                count[y * (width + 1) + b] -= 1.0;
            }
        }
    }
    let mut out = Image::new(width, height, 1);
    for y in 0..height {
        let (mut s, mut c) = (0.0, 0.0);
        for x in 0..width {
            s += sum[y * (width + 1) + x];
            c += count[y * (width + 1) + x];
            if c > 0.5 {
                out.set(x, y, 0, s / c);
            }
        }
    }
    out
}

/// `S·cosθ + S_rot*·sinθ` at elevation magnitude `theta`.
#[inline]
pub fn merge_at(s: f64, s_rot: f64, theta: f64) -> f64 {
    s * theta.cos() + s_rot * theta.sin()
}

/// Elevation-weighted blend of the upright and rotated-back score maps.
pub fn merge_scores(s: &Image, s_rot_star: &Image) -> Result<Image> {
    if !s.same_shape(s_rot_star) || s.channels() != 1 {
        return Err(Error::dims("score maps must match and be single-channel"));
    }
    let h = s.height();
    Ok(Image::from_fn(s.width(), h, 1, |x, y, _| {
        let theta = (FRAC_PI_2 - PI * (y as f64 + 0.5) / h as f64).abs();
        merge_at(s.get(x, y, 0), s_rot_star.get(x, y, 0), theta)
    }))
}

/// Score maps of one panorama at detection resolution.
#[derive(Clone, Debug)]
pub struct ScoreMaps {
    pub upright: Image,
    /// Rotated-frame scores mapped back to the upright frame.
    pub rotated_back: Image,
    pub merged: Image,
}

fn combined_scores(feats: &[Vec<f64>], small: &ClassifierModel, large: &ClassifierModel) -> Vec<f64> {
    feats.iter().map(|f| small.score(f) + large.score(f)).collect()
}

/// Scores from precomputed window features (used by training and
/// calibration, which reuse features).
pub fn score_from_features(
    upright: (&[PatchSpec], &[Vec<f64>]),
    rotated: (&[PatchSpec], &[Vec<f64>]),
    small: &ClassifierModel,
    large: &ClassifierModel,
    width: usize,
    height: usize,
) -> Result<ScoreMaps> {
    let s = rasterize(upright.0, &combined_scores(upright.1, small, large), width, height);
    let s_rot = rasterize(rotated.0, &combined_scores(rotated.1, small, large), width, height);
    let rotated_back = rotate_pitch90_inverse_map(&s_rot);
    let merged = merge_scores(&s, &rotated_back)?;
    Ok(ScoreMaps {
        upright: s,
        rotated_back,
        merged,
    })
}

/// Per-pixel light score of a panorama. The maps have detection
/// resolution (512×256).
pub fn score_panorama(p: &Panorama, small: &ClassifierModel, large: &ClassifierModel) -> Result<ScoreMaps> {
    small.validate()?;
    large.validate()?;
    let hog = HogConfig::default();
    if small.dim() != hog.feature_dim() || large.dim() != hog.feature_dim() {
        return Err(Error::dims("classifier dimension does not match the feature layout"));
    }
    let gray = detection_gray(p);
    let gray_rot = rotate_pitch90_map(&gray);
    let (w, h) = gray.dims();
    let (up, rot) = panorama_windows(w, h);
    let f_up = window_features(&gray, false, &up, hog)?;
    let f_rot = window_features(&gray_rot, true, &rot, hog)?;
    score_from_features((&up, &f_up), (&rot, &f_rot), small, large, w, h)
}
