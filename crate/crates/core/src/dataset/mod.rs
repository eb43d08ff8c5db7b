//! Training data: tone mapping, HDR targets, crop/target pairs, corpus
//! splits and the procedural room generator used in place of real
//! panorama collections.

mod manifest;
mod pairs;
mod synth;

pub use manifest::{load_pair, save_pair, Manifest, ManifestEntry, PairMode, Split, MANIFEST_VERSION};
pub use pairs::{
    make_hdr_pairs, make_ldr_pairs, sample_crop, split_sources, PairConfig, PairMeta, TrainingPair,
};
pub use synth::{
    gen_synthetic_pano, scene_normals, LightClass, SceneAnnotation, SynthConfig, SynthLight,
    SynthScene,
};

use crate::error::{Error, Result};
use crate::image::{percentile, Image};

/// Exposure-normalizing tone curve: the 90th percentile of all channel
/// values maps to 0.8, then gamma 1/2.2 and clipping to `[0, 1]`.
pub fn tonemap(img: &Image) -> Image {
    let mut pooled: Vec<f64> = img.data().iter().map(|v| v.max(0.0)).collect();
    let mut reference = percentile(&mut pooled, 0.9);
    if reference <= 0.0 {
        // sparse highlights on black: fall back to the maximum
        reference = pooled.last().copied().unwrap_or(0.0);
    }
    if reference <= 0.0 {
        return Image::new(img.width(), img.height(), img.channels());
    }
    img.map(|v| (0.8 * v.max(0.0) / reference).powf(1.0 / 2.2).clamp(0.0, 1.0))
}

/// Max-channel intensity of every pixel.
pub fn max_channel(img: &Image) -> Image {
    let c = img.channels();
    let data = img
        .data()
        .chunks_exact(c)
        .map(|p| p.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Image::from_vec(img.width(), img.height(), 1, data).expect("dims preserved")
}

/// `log10` of the max-channel intensity; pixels below `clamp_median` and
/// negative logarithms are set to 0.
pub fn make_hdr_target(p: &Image, clamp_median: f64) -> Result<Image> {
    if !(clamp_median > 0.0 && clamp_median.is_finite()) {
        return Err(Error::domain(format!(
            "clamp median must be positive, got {clamp_median}"
        )));
    }
    Ok(max_channel(p).map(|v| {
        if v < clamp_median {
            0.0
        } else {
            v.log10().max(0.0)
        }
    }))
}

/// Median max-channel intensity over a corpus.
pub fn corpus_median<'a>(images: impl IntoIterator<Item = &'a Image>) -> f64 {
    let mut all: Vec<f64> = images
        .into_iter()
        .flat_map(|img| max_channel(img).into_vec())
        .collect();
    percentile(&mut all, 0.5)
}
