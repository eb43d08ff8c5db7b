use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{make_hdr_target, tonemap};
use crate::error::{Error, Result};
use crate::geometry::{extract_crop, resize_area, rotate_azimuth_map, CropSpec, DynamicRange, Panorama};
use crate::image::{BinaryMask, Image};
use crate::rng::rng_from_seed;
use crate::warp::{recenter_map, select_beta, WarpParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairConfig {
    pub crops_per_pano: usize,
    pub crop_width: usize,
    pub crop_height: usize,
    pub target_width: usize,
    /// Largest absolute crop elevation, degrees.
    pub max_elevation_deg: f64,
    pub hfov_min_deg: f64,
    pub hfov_max_deg: f64,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            crops_per_pano: 8,
            crop_width: 256,
            crop_height: 192,
            target_width: 256,
            max_elevation_deg: 30.0,
            hfov_min_deg: 50.0,
            hfov_max_deg: 70.0,
        }
    }
}

impl PairConfig {
    pub fn target_height(&self) -> usize {
        self.target_width / 2
    }

    fn validate(&self) -> Result<()> {
        if self.crop_width == 0 || self.crop_height == 0 || self.target_width < 2 || self.target_width % 2 != 0 {
            return Err(Error::domain("crop and target sizes must be positive, target width even"));
        }
        if !(0.0 < self.hfov_min_deg && self.hfov_min_deg <= self.hfov_max_deg && self.hfov_max_deg < 180.0) {
            return Err(Error::domain("hfov range must lie in (0, 180) degrees"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMeta {
    pub source_id: u64,
    pub crop: CropSpec,
    pub warp: WarpParams,
}

/// One network input and its panorama targets.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    /// LDR crop, 3 channels.
    pub input: Image,
    /// LDR panorama with the crop direction at the center column.
    pub target_rgb: Image,
    /// Light mask in {0, 1} (LDR) or log10 intensity (HDR), one channel.
    pub target_aux: Image,
    pub meta: PairMeta,
}

pub fn sample_crop<R: Rng>(rng: &mut R, cfg: &PairConfig) -> CropSpec {
    let azimuth = rng.random_range(-PI..PI);
    let e = cfg.max_elevation_deg.to_radians();
    let elevation = if e > 0.0 { rng.random_range(-e..=e) } else { 0.0 };
    let hfov = if cfg.hfov_max_deg > cfg.hfov_min_deg {
        rng.random_range(cfg.hfov_min_deg..=cfg.hfov_max_deg)
    } else {
        cfg.hfov_min_deg
    }
    .to_radians();
    CropSpec {
        azimuth,
        elevation,
        hfov,
        width: cfg.crop_width,
        height: cfg.crop_height,
    }
}

fn warp_for(spec: &CropSpec, normals: &dyn Fn(&CropSpec) -> Option<Image>) -> Result<WarpParams> {
    match normals(spec) {
        Some(n) => select_beta(&n, spec),
        None => WarpParams::new(0.0, spec.azimuth),
    }
}

/// Recenters, rotates the crop azimuth to the center column and resizes.
fn retarget(map: &Image, warp: &WarpParams, spec: &CropSpec, width: usize) -> Result<Image> {
    let warped = recenter_map(map, warp)?;
    let centered = rotate_azimuth_map(&warped, -spec.azimuth);
    Ok(resize_area(&centered, width, width / 2))
}

/// Eight (by default) crops of a panorama with recentered targets.
///
/// HDR panoramas are tone mapped first. `normals` supplies per-crop
/// surface normals for choosing the warp; `None` disables warping.
pub fn make_ldr_pairs<R: Rng>(
    p: &Panorama,
    mask: &BinaryMask,
    normals: &dyn Fn(&CropSpec) -> Option<Image>,
    rng: &mut R,
    cfg: &PairConfig,
    source_id: u64,
) -> Result<Vec<TrainingPair>> {
    cfg.validate()?;
    if mask.dims() != (p.width(), p.height()) {
        return Err(Error::dims("mask does not match panorama"));
    }
    let ldr = match p.range() {
        DynamicRange::Ldr => p.image().clone(),
        DynamicRange::Hdr => tonemap(p.image()),
    };
    let ldr = if ldr.channels() == 1 { ldr.broadcast(3) } else { ldr };
    let ldr_pano = Panorama::derived(ldr, DynamicRange::Ldr);
    let mask_img = mask.to_image();
    let mut out = Vec::with_capacity(cfg.crops_per_pano);
    for _ in 0..cfg.crops_per_pano {
        let spec = sample_crop(rng, cfg);
        let warp = warp_for(&spec, normals)?;
        let input = extract_crop(&ldr_pano, &spec)?;
        let target_rgb = retarget(ldr_pano.image(), &warp, &spec, cfg.target_width)?;
        let soft = retarget(&mask_img, &warp, &spec, cfg.target_width)?;
        let target_aux = BinaryMask::threshold(&soft, 0.5).to_image();
        out.push(TrainingPair {
            input,
            target_rgb,
            target_aux,
            meta: PairMeta {
                source_id,
                crop: spec,
                warp,
            },
        });
    }
    Ok(out)
}

/// HDR variant: tone-mapped crop as input, tone-mapped panorama as rgb
/// target and clamped log10 intensity as the auxiliary target.
pub fn make_hdr_pairs<R: Rng>(
    p: &Panorama,
    normals: &dyn Fn(&CropSpec) -> Option<Image>,
    rng: &mut R,
    cfg: &PairConfig,
    source_id: u64,
    clamp_median: f64,
) -> Result<Vec<TrainingPair>> {
    cfg.validate()?;
    if p.range() != DynamicRange::Hdr {
        return Err(Error::domain("HDR pairs need an HDR panorama"));
    }
    let hdr = if p.channels() == 1 { p.image().broadcast(3) } else { p.image().clone() };
    let hdr_pano = Panorama::derived(hdr, DynamicRange::Hdr);
    let ldr = tonemap(hdr_pano.image());
    let mut out = Vec::with_capacity(cfg.crops_per_pano);
    for _ in 0..cfg.crops_per_pano {
        let spec = sample_crop(rng, cfg);
        let warp = warp_for(&spec, normals)?;
        let input = tonemap(&extract_crop(&hdr_pano, &spec)?);
        let target_rgb = retarget(&ldr, &warp, &spec, cfg.target_width)?;
        let linear = retarget(hdr_pano.image(), &warp, &spec, cfg.target_width)?;
        let target_aux = make_hdr_target(&linear, clamp_median)?;
        out.push(TrainingPair {
            input,
            target_rgb,
            target_aux,
            meta: PairMeta {
                source_id,
                crop: spec,
                warp,
            },
        });
    }
    Ok(out)
}

/// Splits source ids 85/15 with a seeded shuffle; returns `(train, test)`.
pub fn split_sources(ids: &[u64], seed: u64) -> (Vec<u64>, Vec<u64>) {
    let mut shuffled = ids.to_vec();
    shuffled.sort_unstable();
    shuffled.dedup();
    shuffled.shuffle(&mut rng_from_seed(seed ^ 0x5151));
    let n = shuffled.len();
    let mut n_test = (0.15 * n as f64).round() as usize;
    if n >= 2 {
        n_test = n_test.max(1);
    }
    let test = shuffled[..n_test].to_vec();
    let mut train = shuffled[n_test..].to_vec();
    train.sort_unstable();
    let mut test = test;
    test.sort_unstable();
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn dark_panorama_gives_zero_targets() {
        let p = Panorama::new(Image::new(64, 32, 3), DynamicRange::Ldr).unwrap();
        let mask = BinaryMask::new(64, 32);
        let cfg = PairConfig {
            crop_width: 16,
            crop_height: 12,
            target_width: 32,
            ..PairConfig::default()
        };
        let pairs = make_ldr_pairs(&p, &mask, &|_| None, &mut rng_from_seed(3), &cfg, 0).unwrap();
        assert_eq!(pairs.len(), 8);
        for pair in &pairs {
            assert!(pair.input.data().iter().all(|&v| v == 0.0));
            assert!(pair.target_rgb.data().iter().all(|&v| v == 0.0));
            assert!(pair.target_aux.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn split_is_disjoint() {
        let ids: Vec<u64> = (0..20).collect();
        let (train, test) = split_sources(&ids, 9);
        assert_eq!(test.len(), 3);
        assert_eq!(train.len() + test.len(), 20);
        assert!(train.iter().all(|i| !test.contains(i)));
    }
}
