//! Mask refinement: dense-CRF mean field on a coarse grid, edge-aware
//! upsampling, morphology and the bottom-band cut. Also the IoU-based
//! threshold calibration.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classifier::sigmoid;
use super::features::cutoff_row;
use crate::error::{Error, Result};
use crate::geometry::resize_area;
use crate::image::{BinaryMask, Image};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub crf: bool,
    pub morphology: bool,
    /// Width of the mean-field grid (at most 256).
    pub work_width: usize,
    pub iterations: usize,
    /// Kernel widths in full-resolution (512-wide) pixels.
    pub sigma_spatial: f64,
    pub sigma_bilateral: f64,
    pub sigma_color: f64,
    pub w_spatial: f64,
    pub w_bilateral: f64,
    /// Slope of the score-to-probability calibration.
    pub kappa: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            crf: true,
            morphology: true,
            work_width: 256,
            iterations: 5,
            sigma_spatial: 8.0,
            sigma_bilateral: 32.0,
            sigma_color: 0.03,
            w_spatial: 1.0,
            w_bilateral: 30.0,
            kappa: 4.0,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.work_width < 4 || self.work_width > 256 || self.work_width % 2 != 0 {
            return Err(Error::domain("CRF work width must be even and within [4, 256]"));
        }
        if !(self.sigma_spatial > 0.0 && self.sigma_bilateral > 0.0 && self.sigma_color > 0.0) {
            return Err(Error::domain("CRF kernel widths must be positive"));
        }
        Ok(())
    }
}

/// Calibrated light probability of a raw score.
#[inline]
pub fn calibrated(score: f64, threshold: f64, kappa: f64) -> f64 {
    sigmoid(kappa * (score - threshold))
}

/// Gaussian blur along one axis of a row-major grid, with the kernel
/// truncated at 3σ. `wrap` makes the axis periodic; otherwise taps past
/// the ends are dropped.
fn blur_axis(src: &[f64], dims: &[usize], axis: usize, taps: &[f64], wrap: bool) -> Vec<f64> {
    let inner: usize = dims[axis + 1..].iter().product();
    let len = dims[axis];
    let r = (taps.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for (o_block, s_block) in out.chunks_exact_mut(len * inner).zip(src.chunks_exact(len * inner)) {
        for pos in 0..len {
            let o = &mut o_block[pos * inner..(pos + 1) * inner];
            for (k, &t) in taps.iter().enumerate() {
                let mut q = pos as isize + k as isize - r;
                if wrap {
                    q = q.rem_euclid(len as isize);
                } else if q < 0 || q >= len as isize {
                    continue;
                }
                let sv = &s_block[q as usize * inner..(q as usize + 1) * inner];
                for (a, b) in o.iter_mut().zip(sv) {
                    *a += t * b;
                }
            }
        }
    }
    out
}

fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil().max(1.0) as isize;
    (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect()
}

/// Normalized Gaussian average over the image plane (wrapping in x).
struct SpatialFilter {
    dims: [usize; 2],
    taps: Vec<f64>,
    norm: Vec<f64>,
}

impl SpatialFilter {
    fn new(w: usize, h: usize, sigma: f64) -> Self {
        let mut f = Self {
            dims: [h, w],
            taps: gaussian_taps(sigma),
            norm: Vec::new(),
        };
        f.norm = f.raw(&vec![1.0; w * h]);
        f
    }

    fn raw(&self, v: &[f64]) -> Vec<f64> {
        let a = blur_axis(v, &self.dims, 1, &self.taps, true);
        blur_axis(&a, &self.dims, 0, &self.taps, false)
    }

    fn average(&self, v: &[f64]) -> Vec<f64> {
        self.raw(v).iter().zip(&self.norm).map(|(a, n)| a / n).collect()
    }
}

/// Bilateral (position + gray level) Gaussian average on a coarse
/// grid: trilinear splat, separable blur, trilinear slice.
struct BilateralGrid {
    dims: [usize; 3],
    /// Per pixel: eight grid cells and their trilinear weights.
    cells: Vec<[(u32, f64); 8]>,
    taps: Vec<f64>,
    norm: Vec<f64>,
}

impl BilateralGrid {
    const PAD: f64 = 2.0;

    fn new(gray: &Image, sigma_xy: f64, sigma_c: f64) -> Self {
        let (w, h) = gray.dims();
        let nx = ((w as f64 / sigma_xy).round() as usize).max(1);
        let cx = w as f64 / nx as f64;
        let ny = (h as f64 / sigma_xy).ceil() as usize + 2 * Self::PAD as usize + 1;
        let nz = (1.0 / sigma_c).ceil() as usize + 2 * Self::PAD as usize + 2;
        let cells = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                let fx = (x as f64 + 0.5) / cx - 0.5;
                let fy = (y as f64 + 0.5) / sigma_xy - 0.5 + Self::PAD;
                let fz = gray.data()[i].clamp(0.0, 1.0) / sigma_c + Self::PAD;
                let (x0, y0, z0) = (fx.floor(), fy.floor(), fz.floor());
                let (tx, ty, tz) = (fx - x0, fy - y0, fz - z0);
                let mut out = [(0u32, 0.0); 8];
                for (k, o) in out.iter_mut().enumerate() {
                    let (dx, dy, dz) = (k & 1, (k >> 1) & 1, (k >> 2) & 1);
                    let gx = (x0 as isize + dx as isize).rem_euclid(nx as isize) as usize;
                    let gy = (y0 as usize + dy).min(ny - 1);
                    let gz = (z0 as usize + dz).min(nz - 1);
                    let wt = (if dx == 1 { tx } else { 1.0 - tx })
                        * (if dy == 1 { ty } else { 1.0 - ty })
                        * (if dz == 1 { tz } else { 1.0 - tz });
                    *o = (((gy * nx + gx) * nz + gz) as u32, wt);
                }
                out
            })
            .collect();
        let mut g = Self {
            dims: [ny, nx, nz],
            cells,
            taps: gaussian_taps(1.0),
            norm: Vec::new(),
        };
        g.norm = g.raw(&vec![1.0; w * h]);
        g
    }

    fn raw(&self, v: &[f64]) -> Vec<f64> {
        let mut grid = vec![0.0; self.dims.iter().product()];
        for (c, &x) in self.cells.iter().zip(v) {
            for &(j, wt) in c {
                grid[j as usize] += wt * x;
            }
        }
        let grid = blur_axis(&grid, &self.dims, 1, &self.taps, true);
        let grid = blur_axis(&grid, &self.dims, 0, &self.taps, false);
        let grid = blur_axis(&grid, &self.dims, 2, &self.taps, false);
        self.cells
            .iter()
            .map(|c| c.iter().map(|&(j, wt)| wt * grid[j as usize]).sum())
            .collect()
    }

    fn average(&self, v: &[f64]) -> Vec<f64> {
        self.raw(v).iter().zip(&self.norm).map(|(a, n)| a / n.max(1e-300)).collect()
    }
}

type UpsampleTaps = [(u32, f32); 16];

/// Normalized joint-bilateral weights from the 4×4 nearest coarse cells
/// to every full-resolution pixel. Falls back to bilinear weights where
/// every cell differs too much in gray level.
fn upsample_taps(gray: &Image, gray_work: &Image, sigma_color: f64) -> Vec<UpsampleTaps> {
    let (fw, fh) = gray.dims();
    let (ww, wh) = gray_work.dims();
    let fx = ww as f64 / fw as f64;
    let fy = wh as f64 / fh as f64;
    let mut out = vec![[(0u32, 0f32); 16]; fw * fh];
    out.par_chunks_mut(fw).enumerate().for_each(|(y, row)| {
        let v = (y as f64 + 0.5) * fy;
        for (x, taps) in row.iter_mut().enumerate() {
            let u = (x as f64 + 0.5) * fx;
            let g = gray.get(x, y, 0);
            let cx = (u - 0.5).floor() as isize;
            let cy = (v - 0.5).floor() as isize;
            let mut raw = [(0u32, 0f64); 16];
            let mut den = 0.0;
            for (n, (j, i)) in (cy - 1..=cy + 2).flat_map(|j| (cx - 1..=cx + 2).map(move |i| (j, i))).enumerate() {
                if j < 0 || j >= wh as isize {
                    continue;
                }
                let ii = i.rem_euclid(ww as isize) as usize;
                let du = u - (i as f64 + 0.5);
                let dv = v - (j as f64 + 0.5);
                let dc = g - gray_work.get(ii, j as usize, 0);
                let k = (-(du * du + dv * dv) / 2.0 - dc * dc / (2.0 * sigma_color * sigma_color)).exp();
                raw[n] = ((j as usize * ww + ii) as u32, k);
                den += k;
            }
            if den > 1e-200 {
                for (t, r) in taps.iter_mut().zip(&raw) {
                    *t = (r.0, (r.1 / den) as f32);
                }
            } else {
                let tx = u - 0.5 - cx as f64;
                let ty = v - 0.5 - cy as f64;
                for (n, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                    let jj = (cy + dy).clamp(0, wh as isize - 1) as usize;
                    let ii = (cx + dx).rem_euclid(ww as isize) as usize;
                    let wx = if dx == 1 { tx } else { 1.0 - tx };
                    let wy = if dy == 1 { ty } else { 1.0 - ty };
                    taps[n] = ((jj * ww + ii) as u32, (wx * wy) as f32);
                }
            }
        }
    });
    out
}

/// Pairwise filters on the coarse grid, built once per panorama.
pub struct CrfContext {
    full: (usize, usize),
    work: (usize, usize),
    upsample_taps: Vec<UpsampleTaps>,
    spatial: SpatialFilter,
    bilateral: BilateralGrid,
    cfg: RefineConfig,
}

impl CrfContext {
    /// `gray` is the grayscale LDR panorama at score resolution.
    pub fn new(gray: &Image, cfg: &RefineConfig) -> Result<Self> {
        cfg.validate()?;
        if gray.channels() != 1 {
            return Err(Error::domain("CRF guide must be grayscale"));
        }
        let (fw, fh) = gray.dims();
        let ww = cfg.work_width.min(fw);
        let wh = (ww / 2).max(1);
        let gray_work = resize_area(gray, ww, wh);
        let factor = ww as f64 / 512.0;
        let ss = (cfg.sigma_spatial * factor).max(0.5);
        let sb = (cfg.sigma_bilateral * factor).max(0.5);
        Ok(Self {
            full: (fw, fh),
            work: (ww, wh),
            upsample_taps: upsample_taps(gray, &gray_work, cfg.sigma_color),
            spatial: SpatialFilter::new(ww, wh, ss),
            bilateral: BilateralGrid::new(&gray_work, sb, cfg.sigma_color),
            cfg: cfg.clone(),
        })
    }

    /// Light marginal on the coarse grid after mean-field iterations.
    pub fn mean_field(&self, scores_work: &Image, threshold: f64) -> Vec<f64> {
        let n = self.work.0 * self.work.1;
        let eps = 1e-6;
        let unary: Vec<(f64, f64)> = scores_work
            .data()
            .iter()
            .map(|&s| {
                let p = calibrated(s, threshold, self.cfg.kappa).clamp(eps, 1.0 - eps);
                (-(1.0 - p).ln(), -p.ln())
            })
            .collect();
        let mut q: Vec<f64> = scores_work
            .data()
            .iter()
            .map(|&s| if s >= threshold { 0.9 } else { 0.1 })
            .collect();
        let (ws, wb) = (self.cfg.w_spatial, self.cfg.w_bilateral);
        for _ in 0..self.cfg.iterations {
            let a_s = self.spatial.average(&q);
            let a_b = self.bilateral.average(&q);
            // Potts: a label pays for the (kernel-averaged) mass of the other
            for i in 0..n {
                let m1 = ws * a_s[i] + wb * a_b[i];
                let m0 = ws + wb - m1;
                let e0 = unary[i].0 + m1;
                let e1 = unary[i].1 + m0;
                q[i] = sigmoid(e0 - e1);
            }
        }
        q
    }

    /// Joint-bilateral upsampling of a coarse map guided by the full
    /// resolution grayscale image.
    pub fn upsample(&self, q: &[f64]) -> Image {
        let (fw, fh) = self.full;
        let data = self
            .upsample_taps
            .iter()
            .map(|taps| taps.iter().map(|&(j, k)| k as f64 * q[j as usize]).sum())
            .collect();
        Image::from_vec(fw, fh, 1, data).expect("full grid dims")
    }

    /// Scores resampled to the mean-field grid.
    pub fn work_scores(&self, scores: &Image) -> Image {
        resize_area(scores, self.work.0, self.work.1)
    }

    /// Full-resolution light probability.
    pub fn probability(&self, scores: &Image, threshold: f64) -> Image {
        self.upsample(&self.mean_field(&self.work_scores(scores), threshold))
    }

    pub fn refine(&self, scores: &Image, threshold: f64) -> BinaryMask {
        self.refine_work(&self.work_scores(scores), threshold)
    }

    fn refine_work(&self, scores_work: &Image, threshold: f64) -> BinaryMask {
        let prob = self.upsample(&self.mean_field(scores_work, threshold));
        finish_mask(BinaryMask::threshold(&prob, 0.5), self.cfg.morphology)
    }
}

fn erode(m: &BinaryMask) -> BinaryMask {
    neighborhood(m, true)
}

fn dilate(m: &BinaryMask) -> BinaryMask {
    neighborhood(m, false)
}

/// 3×3 erosion (`all`) or dilation (any), wrapping horizontally and
/// ignoring rows outside the image. Done as two 3-tap passes.
fn neighborhood(m: &BinaryMask, all: bool) -> BinaryMask {
    let (w, h) = m.dims();
    let src = m.data();
    let pick = |a: bool, b: bool, c: bool| if all { a && b && c } else { a || b || c };
    let mut rows = vec![false; w * h];
    for y in 0..h {
        let r = &src[y * w..(y + 1) * w];
        for x in 0..w {
            rows[y * w + x] = pick(r[(x + w - 1) % w], r[x], r[(x + 1) % w]);
        }
    }
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let c = rows[y * w + x];
            let up = if y > 0 { rows[(y - 1) * w + x] } else { c };
            let down = if y + 1 < h { rows[(y + 1) * w + x] } else { c };
            out[y * w + x] = pick(up, c, down);
        }
    }
    BinaryMask::from_vec(w, h, out).expect("same dims")
}

pub fn opening(m: &BinaryMask) -> BinaryMask {
    dilate(&erode(m))
}

pub fn closing(m: &BinaryMask) -> BinaryMask {
    erode(&dilate(m))
}

/// Clears the bottom exclusion band.
pub fn clear_bottom(m: &mut BinaryMask) {
    let (w, h) = m.dims();
    for y in cutoff_row(h)..h {
        for x in 0..w {
            m.set(x, y, false);
        }
    }
}

fn finish_mask(mut m: BinaryMask, morphology: bool) -> BinaryMask {
    if morphology {
        m = closing(&opening(&m));
    }
    clear_bottom(&mut m);
    m
}

/// Binarizes scores at `threshold`, then applies the configured
/// refinement steps. `gray` is the grayscale panorama at score resolution.
pub fn refine_mask(scores: &Image, gray: &Image, threshold: f64, cfg: &RefineConfig) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::domain(format!("threshold {threshold} outside [0, 1]")));
    }
    if scores.dims() != gray.dims() || scores.channels() != 1 {
        return Err(Error::dims("scores and guide image differ"));
    }
    if cfg.crf {
        return Ok(CrfContext::new(gray, cfg)?.refine(scores, threshold));
    }
    Ok(finish_mask(BinaryMask::threshold(scores, threshold), cfg.morphology))
}

/// Threshold grid used for calibration.
pub fn threshold_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Grid search for the threshold with the highest mean IoU between the
/// refined masks and the ground truth. Ties go to the smallest threshold.
pub fn calibrate_threshold(
    scores: &[Image],
    guides: &[Image],
    gt: &[BinaryMask],
    cfg: &RefineConfig,
) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::domain("calibration needs at least one panorama"));
    }
    if scores.len() != gt.len() || scores.len() != guides.len() {
        return Err(Error::dims("calibration lists differ in length"));
    }
    let grid = threshold_grid();
    let mut totals = vec![0.0; grid.len()];
    for ((s, g), truth) in scores.iter().zip(guides).zip(gt) {
        if s.dims() != truth.dims() {
            return Err(Error::dims("score map and ground truth differ"));
        }
        let ctx = if cfg.crf { Some(CrfContext::new(g, cfg)?) } else { None };
        let work = ctx.as_ref().map(|c| c.work_scores(s));
        for (t, total) in grid.iter().zip(totals.iter_mut()) {
            let m = match (&ctx, &work) {
                (Some(c), Some(ws)) => c.refine_work(ws, *t),
                _ => finish_mask(BinaryMask::threshold(s, *t), cfg.morphology),
            };
            *total += m.iou(truth);
        }
    }
    let mut best = 0;
    for (i, &v) in totals.iter().enumerate() {
        if v > totals[best] {
            best = i;
        }
    }
    Ok(grid[best])
}

/// Elevation of the center of row `y`.
pub fn row_elevation(y: usize, height: usize) -> f64 {
    FRAC_PI_2 - PI * (y as f64 + 0.5) / height as f64
}
