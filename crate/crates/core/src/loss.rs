//! Cosine-lobe filtering on the sphere and the training losses built on it.
//!
//! All losses return their value together with the gradient with respect
//! to the prediction, in the same layout as the prediction.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pixel_center_dir, solid_angles, SolidAngleMap};
use crate::image::Image;

/// Sub-samples per pixel side used when integrating the lobe.
const SUBSAMPLES: usize = 4;
/// Taps lighter than this fraction of the row maximum are dropped.
const PRUNE_RATIO: f64 = 1e-6;
/// Progress is re-quantized to this step before building a kernel.
pub const PROGRESS_STEP: f64 = 0.25;
const CACHE_CAPACITY: usize = 12;

pub const LDR_ALPHA: f64 = 3.0;
pub const LDR_W_RGB: f64 = 100.0;
pub const LDR_W_MASK: f64 = 1.0;
pub const HDR_W_RGB: f64 = 10.0;
pub const HDR_W_COS: f64 = 1.0;
pub const HDR_W_L2: f64 = 0.1;

/// Training progress `e` (epochs, fractional) and the exponent scale `α`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainProgress {
    pub e: f64,
    pub alpha: f64,
}

impl Default for TrainProgress {
    fn default() -> Self {
        Self {
            e: 0.0,
            alpha: LDR_ALPHA,
        }
    }
}

impl TrainProgress {
    pub fn new(e: f64) -> Self {
        Self {
            e,
            alpha: LDR_ALPHA,
        }
    }

    pub fn advance(&mut self, fraction: f64) {
        self.e += fraction.max(0.0);
    }

    /// `α·e` with `e` floored to the quantization step.
    pub fn exponent(&self) -> f64 {
        self.alpha * (self.e / PROGRESS_STEP).floor().max(0.0) * PROGRESS_STEP
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Tap {
    row: u32,
    offset: u32,
    weight: f64,
}

/// Sparse `(ω·n)^k` hemisphere kernel on an equirectangular grid.
///
/// Rows of the kernel depend only on the output row; the input column is
/// the output column plus a stored offset, so azimuthal shifts by whole
/// columns commute exactly with filtering.
#[derive(Debug)]
pub struct FilterKernel {
    width: usize,
    height: usize,
    exponent: f64,
    rows: Vec<Vec<Tap>>,
    transposed: Vec<Vec<Tap>>,
}

impl FilterKernel {
    pub fn build(width: usize, height: usize, exponent: f64) -> Result<FilterKernel> {
        if width != 2 * height || height == 0 {
            return Err(Error::domain(format!(
                "kernel needs a 2:1 grid, got {width}x{height}"
            )));
        }
        if !(exponent >= 0.0 && exponent.is_finite()) {
            return Err(Error::domain(format!("invalid exponent {exponent}")));
        }
        let n = SUBSAMPLES;
        let sub_rows = height * n;
        let sub_cols = width * n;
        // elevation trig and band solid angle per sub-row
        let row_geo: Vec<(f64, f64, f64)> = (0..sub_rows)
            .map(|r| {
                let top = FRAC_PI_2 - PI * r as f64 / sub_rows as f64;
                let bottom = FRAC_PI_2 - PI * (r + 1) as f64 / sub_rows as f64;
                let mid = FRAC_PI_2 - PI * (r as f64 + 0.5) / sub_rows as f64;
                let s = TAU / sub_cols as f64 * (top.sin() - bottom.sin());
                (mid.sin(), mid.cos(), s)
            })
            .collect();
        let col_geo: Vec<(f64, f64)> = (0..sub_cols)
            .map(|c| (TAU * (c as f64 + 0.5) / sub_cols as f64 - PI).sin_cos())
            .collect();

        let rows: Vec<Vec<Tap>> = (0..height)
            .into_par_iter()
            .map(|yi| {
                let nrm = pixel_center_dir(0, yi, width, height);
                let mut weights = vec![0.0; width * height];
                let mut hemisphere = 0.0;
                for (r, &(sl, cl, s)) in row_geo.iter().enumerate() {
                    let row_base = (r / n) * width;
                    let vy = sl * nrm.y;
                    for (c, &(sp, cp)) in col_geo.iter().enumerate() {
                        let dot = cl * (sp * nrm.x + cp * nrm.z) + vy;
                        if dot > 0.0 {
                            hemisphere += s;
                            let v = if exponent == 0.0 { 1.0 } else { dot.powf(exponent) };
                            weights[row_base + c / n] += s * v;
                        }
                    }
                }
                let max = weights.iter().copied().fold(0.0, f64::max);
                let cutoff = max * PRUNE_RATIO;
                weights
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| w > 0.0 && w >= cutoff)
                    .map(|(i, &w)| Tap {
                        row: (i / width) as u32,
                        offset: (i % width) as u32,
                        weight: w / hemisphere,
                    })
                    .collect()
            })
            .collect();

        let mut transposed = vec![Vec::new(); height];
        for (yi, taps) in rows.iter().enumerate() {
            for t in taps {
                transposed[t.row as usize].push(Tap {
                    row: yi as u32,
                    offset: ((width - t.offset as usize) % width) as u32,
                    weight: t.weight,
                });
            }
        }
        Ok(FilterKernel {
            width,
            height,
            exponent,
            rows,
            transposed,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Sum of the weights of output row `y`.
    pub fn row_sum(&self, y: usize) -> f64 {
        self.rows[y].iter().map(|t| t.weight).sum()
    }

    pub fn tap_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Dense weights of output pixel `(x, y)` as a `W×H` map.
    pub fn weights_at(&self, x: usize, y: usize) -> Image {
        let mut out = Image::new(self.width, self.height, 1);
        for t in &self.rows[y] {
            let col = (x + t.offset as usize) % self.width;
            out.set(col, t.row as usize, 0, t.weight);
        }
        out
    }

    fn check(&self, map: &Image) -> Result<()> {
        if map.width() != self.width || map.height() != self.height || map.channels() != 1 {
            return Err(Error::domain(format!(
                "map {}x{}x{} does not match kernel {}x{}x1",
                map.width(),
                map.height(),
                map.channels(),
                self.width,
                self.height
            )));
        }
        Ok(())
    }

    pub fn apply(&self, map: &Image) -> Result<Image> {
        self.check(map)?;
        Ok(self.convolve(map, &self.rows))
    }

    /// Applies the transposed kernel (used for back-propagation).
    pub fn apply_transpose(&self, map: &Image) -> Result<Image> {
        self.check(map)?;
        Ok(self.convolve(map, &self.transposed))
    }

    fn convolve(&self, map: &Image, taps: &[Vec<Tap>]) -> Image {
        let w = self.width;
        let src = map.data();
        let mut out = Image::new(w, self.height, 1);
        out.data_mut()
            .par_chunks_mut(w)
            .zip(taps.par_iter())
            .for_each(|(row, taps)| {
                for t in taps {
                    let base = t.row as usize * w;
                    let off = t.offset as usize;
                    let wt = t.weight;
                    let split = w - off;
                    let (head, tail) = row.split_at_mut(split);
                    for (o, v) in head.iter_mut().zip(&src[base + off..base + w]) {
                        *o += wt * v;
                    }
                    for (o, v) in tail.iter_mut().zip(&src[base..base + off]) {
                        *o += wt * v;
                    }
                }
            });
        out
    }
}

type CacheKey = (usize, usize, u64);

struct KernelCache {
    map: HashMap<CacheKey, Arc<FilterKernel>>,
    order: VecDeque<CacheKey>,
}

fn cache() -> &'static Mutex<KernelCache> {
    static CACHE: OnceLock<Mutex<KernelCache>> = OnceLock::new();
    CACHE.get_or_init(|| {
        Mutex::new(KernelCache {
            map: HashMap::new(),
            order: VecDeque::new(),
        })
    })
}

/// Returns a shared kernel, building it on first use.
pub fn kernel(width: usize, height: usize, exponent: f64) -> Result<Arc<FilterKernel>> {
    let key = (width, height, exponent.to_bits());
    let mut guard = cache().lock().unwrap_or_else(|e| e.into_inner());
    if let Some(k) = guard.map.get(&key) {
        return Ok(Arc::clone(k));
    }
    let k = Arc::new(FilterKernel::build(width, height, exponent)?);
    if guard.order.len() >= CACHE_CAPACITY {
        if let Some(old) = guard.order.pop_front() {
            guard.map.remove(&old);
        }
    }
    guard.order.push_back(key);
    guard.map.insert(key, Arc::clone(&k));
    Ok(k)
}

pub fn cosine_filter(map: &Image, kernel: &FilterKernel) -> Result<Image> {
    kernel.apply(map)
}

fn check_pair(y: &Image, t: &Image) -> Result<()> {
    if !y.same_shape(t) {
        return Err(Error::dims(format!(
            "prediction {}x{}x{} vs target {}x{}x{}",
            y.width(),
            y.height(),
            y.channels(),
            t.width(),
            t.height(),
            t.channels()
        )));
    }
    Ok(())
}

/// Solid-angle weighted squared error, `(1/N)·Σ s_i (y_i − t_i)²`.
pub fn l2_loss(y: &Image, t: &Image, s: &SolidAngleMap) -> Result<(f64, Image)> {
    check_pair(y, t)?;
    if s.dims() != (y.width(), y.height()) {
        return Err(Error::dims("solid angle map does not match prediction"));
    }
    let c = y.channels();
    let w = y.width();
    let n = y.data().len() as f64;
    let mut grad = Image::new(w, y.height(), c);
    let mut sum = 0.0;
    for (i, ((g, a), b)) in grad
        .data_mut()
        .iter_mut()
        .zip(y.data())
        .zip(t.data())
        .enumerate()
    {
        let si = s.row(i / (w * c));
        let d = a - b;
        sum += si * d * d;
        *g = 2.0 * si * d / n;
    }
    Ok((sum / n, grad))
}

/// `(1/N)·Σ (F(y) − F(t))²` with a prebuilt kernel.
pub fn cos_loss_with(y: &Image, t: &Image, kernel: &FilterKernel) -> Result<(f64, Image)> {
    check_pair(y, t)?;
    let fy = kernel.apply(y)?;
    let ft = kernel.apply(t)?;
    let n = y.data().len() as f64;
    let mut diff = fy;
    let mut sum = 0.0;
    for (d, b) in diff.data_mut().iter_mut().zip(ft.data()) {
        *d -= b;
        sum += *d * *d;
        *d *= 2.0 / n;
    }
    let grad = kernel.apply_transpose(&diff)?;
    Ok((sum / n, grad))
}

/// Cosine loss with the kernel exponent taken from training progress.
pub fn cos_loss(y: &Image, t: &Image, progress: &TrainProgress) -> Result<(f64, Image)> {
    let k = kernel(y.width(), y.height(), progress.exponent())?;
    cos_loss_with(y, t, &k)
}

/// Value, per-term breakdown and gradients of a two-head loss.
#[derive(Clone, Debug)]
pub struct LossOutput {
    pub total: f64,
    /// `(name, weighted value)` for every term.
    pub terms: Vec<(&'static str, f64)>,
    pub grad_rgb: Image,
    pub grad_aux: Image,
}

fn axpy(dst: &mut Image, a: f64, x: &Image) {
    for (d, v) in dst.data_mut().iter_mut().zip(x.data()) {
        *d += a * v;
    }
}

fn scaled(a: f64, x: Image) -> Image {
    x.map(|v| a * v)
}

/// LDR objective: `100·L2(rgb) + 1·cos(mask)` with `α = 3`.
pub fn loss_ldr(
    y_rgb: &Image,
    y_mask: &Image,
    t_rgb: &Image,
    t_mask: &Image,
    progress: &TrainProgress,
) -> Result<LossOutput> {
    let s = solid_angles(y_rgb.width(), y_rgb.height())?;
    let (l_rgb, g_rgb) = l2_loss(y_rgb, t_rgb, &s)?;
    let p = TrainProgress {
        e: progress.e,
        alpha: LDR_ALPHA,
    };
    let (l_mask, g_mask) = cos_loss(y_mask, t_mask, &p)?;
    let total = LDR_W_RGB * l_rgb + LDR_W_MASK * l_mask;
    if !total.is_finite() {
        return Err(Error::Numeric(format!("non-finite LDR loss {total}")));
    }
    Ok(LossOutput {
        total,
        terms: vec![
            ("rgb_l2", LDR_W_RGB * l_rgb),
            ("mask_cos", LDR_W_MASK * l_mask),
        ],
        grad_rgb: scaled(LDR_W_RGB, g_rgb),
        grad_aux: scaled(LDR_W_MASK, g_mask),
    })
}

/// HDR objective: `10·L2(rgb) + 1·cos(int) + 0.1·L2(int)`.
pub fn loss_hdr(
    y_rgb: &Image,
    y_int: &Image,
    t_rgb: &Image,
    t_int: &Image,
    progress: &TrainProgress,
) -> Result<LossOutput> {
    let s = solid_angles(y_rgb.width(), y_rgb.height())?;
    let (l_rgb, g_rgb) = l2_loss(y_rgb, t_rgb, &s)?;
    let (l_cos, g_cos) = cos_loss(y_int, t_int, progress)?;
    let (l_int, g_int) = l2_loss(y_int, t_int, &s)?;
    let total = HDR_W_RGB * l_rgb + HDR_W_COS * l_cos + HDR_W_L2 * l_int;
    if !total.is_finite() {
        return Err(Error::Numeric(format!("non-finite HDR loss {total}")));
    }
    let mut grad_aux = scaled(HDR_W_COS, g_cos);
    axpy(&mut grad_aux, HDR_W_L2, &g_int);
    Ok(LossOutput {
        total,
        terms: vec![
            ("rgb_l2", HDR_W_RGB * l_rgb),
            ("int_cos", HDR_W_COS * l_cos),
            ("int_l2", HDR_W_L2 * l_int),
        ],
        grad_rgb: scaled(HDR_W_RGB, g_rgb),
        grad_aux,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_zero_rows_sum_to_one() {
        let k = FilterKernel::build(32, 16, 0.0).unwrap();
        for y in 0..16 {
            assert!((k.row_sum(y) - 1.0).abs() < 1e-12, "row {y}: {}", k.row_sum(y));
        }
    }

    #[test]
    fn uniform_exponent_one_halves() {
        let k = FilterKernel::build(128, 64, 1.0).unwrap();
        let out = k.apply(&Image::filled(128, 64, 1, 2.0)).unwrap();
        for &v in out.data() {
            assert!((v - 1.0).abs() < 1e-3, "{v}");
        }
    }

    #[test]
    fn transpose_is_adjoint() {
        let k = FilterKernel::build(16, 8, 2.5).unwrap();
        let a = Image::from_fn(16, 8, 1, |x, y, _| ((x * 13 + y * 7) % 11) as f64);
        let b = Image::from_fn(16, 8, 1, |x, y, _| ((x * 5 + y * 3) % 7) as f64 - 3.0);
        let ka = k.apply(&a).unwrap();
        let ktb = k.apply_transpose(&b).unwrap();
        let lhs: f64 = ka.data().iter().zip(b.data()).map(|(p, q)| p * q).sum();
        let rhs: f64 = a.data().iter().zip(ktb.data()).map(|(p, q)| p * q).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn progress_quantization() {
        assert_eq!(TrainProgress::new(0.3).exponent(), 0.75);
        assert_eq!(TrainProgress::new(0.24).exponent(), 0.0);
        assert_eq!(TrainProgress::new(1.0).exponent(), 3.0);
    }

    #[test]
    fn mismatched_map_rejected() {
        let k = FilterKernel::build(16, 8, 1.0).unwrap();
        assert!(matches!(
            k.apply(&Image::new(8, 4, 1)),
            Err(Error::Domain(_))
        ));
    }
}
