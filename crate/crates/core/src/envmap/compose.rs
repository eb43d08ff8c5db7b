use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, Image};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComposeParams {
    pub lambda_mask: f64,
    pub lambda_rgb: f64,
    pub mask_threshold: f64,
}

impl Default for ComposeParams {
    fn default() -> Self {
        Self {
            lambda_mask: 500.0,
            lambda_rgb: 1.0,
            mask_threshold: 0.5,
        }
    }
}

fn check_aligned(a: &Image, b: &Image, what: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::dims(format!(
            "{what}: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// LDR composition: every thresholded light component gets the mean
/// probability of its pixels as weight `x*`, and the output is
/// `λ_mask·x* + λ_rgb·(1 − x*)·rgb`.
///
/// Negative rgb values (possible from a tanh head) are clamped to zero.
pub fn compose_ldr(mask: &Image, rgb: &Image, params: &ComposeParams) -> Result<Image> {
    check_aligned(mask, rgb, "mask and rgb")?;
    if mask.channels() != 1 || rgb.channels() != 3 {
        return Err(Error::dims("compose_ldr expects a 1-channel mask and 3-channel rgb"));
    }
    let (w, h) = mask.dims();
    let bin = BinaryMask::from_fn(w, h, |x, y| mask.get(x, y, 0) > params.mask_threshold);
    let comps = bin.components(true, true);
    let mut sums = vec![0.0; comps.count + 1];
    let mut counts = vec![0usize; comps.count + 1];
    for (&l, &p) in comps.labels.iter().zip(mask.data()) {
        sums[l as usize] += p;
        counts[l as usize] += 1;
    }
    let weight: Vec<f64> = (0..=comps.count)
        .map(|l| if l == 0 { 0.0 } else { sums[l] / counts[l] as f64 })
        .collect();
    let mut out = Image::new(w, h, 3);
    for (i, (o, p)) in out
        .data_mut()
        .chunks_exact_mut(3)
        .zip(rgb.data().chunks_exact(3))
        .enumerate()
    {
        let x = weight[comps.labels[i] as usize];
        for c in 0..3 {
            let v = p[c].max(0.0);
            o[c] = if x == 0.0 {
                params.lambda_rgb * v
            } else {
                params.lambda_mask * x + params.lambda_rgb * (1.0 - x) * v
            };
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HdrComposeParams {
    /// Pixels with `log_int` above this value form the light region.
    pub light_threshold: f64,
    /// Drop the `10^0 = 1` term outside the light region.
    pub zero_ambient: bool,
}

impl Default for HdrComposeParams {
    fn default() -> Self {
        Self {
            light_threshold: 0.5,
            zero_ambient: false,
        }
    }
}

/// Result of HDR composition, with the two color-matched parts kept for
/// inspection.
#[derive(Clone, Debug)]
pub struct HdrComposition {
    pub env: Image,
    pub light: Image,
    pub rgb: Image,
    pub light_region: BinaryMask,
    pub rgb_scale: [f64; 3],
    pub light_scale: [f64; 3],
}

/// `10^log_int` broadcast to three channels plus rgb, unmatched.
pub fn hdr_base(log_int: &Image, rgb: &Image) -> Result<Image> {
    check_aligned(log_int, rgb, "intensity and rgb")?;
    if log_int.channels() != 1 || rgb.channels() != 3 {
        return Err(Error::dims("hdr_base expects 1-channel intensity and 3-channel rgb"));
    }
    let mut out = rgb.clone();
    for (o, l) in out.data_mut().chunks_exact_mut(3).zip(log_int.data()) {
        let v = 10f64.powf(*l);
        for c in o.iter_mut() {
            *c += v;
        }
    }
    Ok(out)
}

/// HDR composition with gray-world matching against the input crop.
///
/// The rgb part is scaled per channel so its mean over the non-light
/// region equals the crop's channel mean. The light part is tinted by the
/// crop mean divided by the gray level of the rgb part over the same
/// region, so scaling the crop exposure by `k` scales the result by `k`.
pub fn compose_hdr(
    log_int: &Image,
    rgb: &Image,
    crop: &Image,
    params: &HdrComposeParams,
) -> Result<HdrComposition> {
    check_aligned(log_int, rgb, "intensity and rgb")?;
    if log_int.channels() != 1 || rgb.channels() != 3 || crop.channels() != 3 {
        return Err(Error::dims("compose_hdr expects 1-channel intensity, 3-channel rgb and crop"));
    }
    if log_int.data().iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::domain("log intensity must be finite and nonnegative"));
    }
    let (w, h) = log_int.dims();
    let light_region = BinaryMask::from_fn(w, h, |x, y| log_int.get(x, y, 0) > params.light_threshold);
    let background: Vec<usize> = (0..w * h).filter(|&i| !light_region.data()[i]).collect();
    let region: Vec<usize> = if background.is_empty() {
        (0..w * h).collect()
    } else {
        background
    };
    let mut rgb_mean = [0.0; 3];
    for &i in &region {
        for c in 0..3 {
            rgb_mean[c] += rgb.data()[3 * i + c].max(0.0);
        }
    }
    for m in &mut rgb_mean {
        *m /= region.len() as f64;
    }
    let gray = rgb_mean.iter().sum::<f64>() / 3.0;
    let target = crop.channel_means();
    let mut rgb_scale = [0.0; 3];
    let mut light_scale = [0.0; 3];
    for c in 0..3 {
        rgb_scale[c] = target[c] / rgb_mean[c];
        light_scale[c] = target[c] / gray;
    }
    if rgb_scale.iter().chain(&light_scale).any(|s| !s.is_finite()) {
        return Err(Error::Numeric(
            "gray-world matching failed: rgb prediction has zero mean".into(),
        ));
    }
    let mut light = Image::new(w, h, 3);
    let mut rgb_out = Image::new(w, h, 3);
    let mut env = Image::new(w, h, 3);
    for i in 0..w * h {
        let is_light = light_region.data()[i];
        let l = if params.zero_ambient && !is_light {
            0.0
        } else {
            10f64.powf(log_int.data()[i])
        };
        for c in 0..3 {
            let lv = l * light_scale[c];
            let rv = rgb.data()[3 * i + c].max(0.0) * rgb_scale[c];
            light.data_mut()[3 * i + c] = lv;
            rgb_out.data_mut()[3 * i + c] = rv;
            env.data_mut()[3 * i + c] = lv + rv;
        }
    }
    if env.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite environment map".into()));
    }
    Ok(HdrComposition {
        env,
        light,
        rgb: rgb_out,
        light_region,
        rgb_scale,
        light_scale,
    })
}
