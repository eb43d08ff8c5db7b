//! End-to-end detector training on annotated panoramas.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::classifier::{train_classifier, ClassifierModel, TrainConfig, TrainReport};
use super::features::HogConfig;
use super::refine::{calibrate_threshold, RefineConfig};
use super::scoring::{detection_gray, panorama_windows, score_from_features, window_features, window_span};
use super::DetectorModel;
use crate::dataset::LightClass;
use crate::error::{Error, Result};
use crate::geometry::{resize_area, rotate_pitch90_map, Panorama};
use crate::image::{BinaryMask, Image};
use crate::rng::derive_rng;

/// A panorama with its light mask and per-pixel class codes.
#[derive(Clone, Debug)]
pub struct LabeledPanorama {
    pub pano: Panorama,
    pub mask: BinaryMask,
    pub class_map: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub classifier: TrainConfig,
    pub refine: RefineConfig,
    /// Initial negatives per positive window.
    pub negative_ratio: f64,
    pub min_negatives: usize,
    /// Size of the cached hard-negative mining pool.
    pub pool_size: usize,
    /// Panoramas used for threshold calibration.
    pub calibration_panoramas: usize,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            classifier: TrainConfig::default(),
            refine: RefineConfig::default(),
            negative_ratio: 3.0,
            min_negatives: 200,
            pool_size: 12_000,
            calibration_panoramas: 8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub panoramas: usize,
    pub windows: usize,
    pub small: TrainReport,
    pub large: TrainReport,
    pub threshold: f64,
}

/// Windows with at most this much light (and no light at the center)
/// are negatives, so that the classifiers learn to reject windows that
/// only graze an emitter.
const NEGATIVE_COVERAGE: f64 = 0.1;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Label {
    Positive,
    Negative,
    Ignore,
}

/// Fraction of a window covered by a mask, via a wrap-extended
/// summed-area table.
struct Coverage {
    sat: Vec<f64>,
    w: usize,
    h: usize,
    data: Vec<bool>,
}

impl Coverage {
    fn new(mask: &BinaryMask) -> Self {
        let (w, h) = mask.dims();
        let ext = 2 * w + 1;
        let mut sat = vec![0.0; ext * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..2 * w {
                row += mask.get(x % w, y) as u8 as f64;
                sat[(y + 1) * ext + x + 1] = sat[y * ext + x + 1] + row;
            }
        }
        Self {
            sat,
            w,
            h,
            data: mask.data().to_vec(),
        }
    }

    fn fraction(&self, win: &super::PatchSpec) -> f64 {
        let (x0, y0, y1) = window_span(win, self.h);
        if y1 <= y0 {
            return 0.0;
        }
        let ext = 2 * self.w + 1;
        let a = x0.rem_euclid(self.w as isize) as usize;
        let b = a + win.side.min(self.w);
        let s = |x: usize, y: usize| self.sat[y * ext + x];
        let sum = s(b, y1) - s(a, y1) - s(b, y0) + s(a, y0);
        sum / ((b - a) * (y1 - y0)) as f64
    }

    fn at_center(&self, win: &super::PatchSpec) -> bool {
        let x = (win.center.0.floor() as isize).rem_euclid(self.w as isize) as usize;
        let y = (win.center.1.floor() as usize).min(self.h - 1);
        self.data[y * self.w + x]
    }
}

fn label(cov: &Coverage, any: &Coverage, win: &super::PatchSpec) -> Label {
    let c = cov.fraction(win);
    if c >= 0.5 || (c >= 0.2 && cov.at_center(win)) {
        Label::Positive
    } else if any.fraction(win) <= NEGATIVE_COVERAGE && !any.at_center(win) {
        Label::Negative
    } else {
        Label::Ignore
    }
}

fn to_detection_mask(mask: &BinaryMask, w: usize, h: usize) -> BinaryMask {
    if mask.dims() == (w, h) {
        return mask.clone();
    }
    BinaryMask::threshold(&resize_area(&mask.to_image(), w, h), 0.5)
}

fn rotate_mask(mask: &BinaryMask) -> BinaryMask {
    BinaryMask::threshold(&rotate_pitch90_map(&mask.to_image()), 0.5)
}

struct PanoSamples {
    small_pos: Vec<Vec<f64>>,
    large_pos: Vec<Vec<f64>>,
    negatives: Vec<Vec<f64>>,
    windows: usize,
}

fn collect_samples(item: &LabeledPanorama, keep_negative: f64, seed: u64, index: u64) -> Result<PanoSamples> {
    let (pw, ph) = (item.pano.width(), item.pano.height());
    if item.mask.dims() != (pw, ph) || item.class_map.len() != pw * ph {
        return Err(Error::dims("annotation does not match panorama"));
    }
    let gray = detection_gray(&item.pano);
    let gray_rot = rotate_pitch90_map(&gray);
    let (w, h) = gray.dims();
    let class = |c: LightClass| {
        let m = BinaryMask::from_fn(pw, ph, |x, y| item.class_map[y * pw + x] == c.code());
        to_detection_mask(&m, w, h)
    };
    let small = class(LightClass::SmallLight);
    let large = class(LightClass::LargeLight);
    let any = to_detection_mask(&item.mask, w, h);
    let (up, rot) = panorama_windows(w, h);
    let hog = HogConfig::default();
    let mut rng = derive_rng(seed, index);
    let mut out = PanoSamples {
        small_pos: Vec::new(),
        large_pos: Vec::new(),
        negatives: Vec::new(),
        windows: up.len() + rot.len(),
    };
    for (img, wins, masks) in [
        (&gray, &up, [small.clone(), large.clone(), any.clone()]),
        (&gray_rot, &rot, [rotate_mask(&small), rotate_mask(&large), rotate_mask(&any)]),
    ] {
        let rotated = !std::ptr::eq(img, &gray);
        let feats = window_features(img, rotated, wins, hog)?;
        let cs = Coverage::new(&masks[0]);
        let cl = Coverage::new(&masks[1]);
        let ca = Coverage::new(&masks[2]);
        for (win, f) in wins.iter().zip(feats) {
            let ls = label(&cs, &ca, win);
            let ll = label(&cl, &ca, win);
            if ls == Label::Positive {
                out.small_pos.push(f.clone());
            }
            if ll == Label::Positive {
                out.large_pos.push(f.clone());
            }
            if ls == Label::Negative && ll == Label::Negative && rng.random_bool(keep_negative) {
                out.negatives.push(f);
            }
        }
    }
    Ok(out)
}

/// Trains both classifiers with hard-negative mining and calibrates the
/// refinement threshold on (a prefix of) the same panoramas.
pub fn train_detector(data: &[LabeledPanorama], cfg: &DetectorConfig) -> Result<(DetectorModel, DetectorReport)> {
    if data.is_empty() {
        return Err(Error::domain("detector training needs panoramas"));
    }
    cfg.refine.validate()?;
    // rough per-panorama negative count at 512×256 is ~1300 windows
    let budget = cfg.pool_size as f64 * 1.5 + 4000.0;
    let keep = (budget / (1300.0 * data.len() as f64)).min(1.0);
    let mut small_pos = Vec::new();
    let mut large_pos = Vec::new();
    let mut negatives = Vec::new();
    let mut windows = 0;
    for (i, item) in data.iter().enumerate() {
        let s = collect_samples(item, keep, cfg.seed, i as u64)?;
        small_pos.extend(s.small_pos);
        large_pos.extend(s.large_pos);
        negatives.extend(s.negatives);
        windows += s.windows;
    }
    let mut rng = derive_rng(cfg.seed, u64::MAX);
    negatives.shuffle(&mut rng);

    let fit = |positives: &[Vec<f64>], class: LightClass, offset: usize| -> Result<(ClassifierModel, TrainReport)> {
        if positives.is_empty() {
            return Err(Error::domain(format!("no positive windows for {class:?}")));
        }
        let n_neg = ((positives.len() as f64 * cfg.negative_ratio) as usize)
            .max(cfg.min_negatives)
            .min(negatives.len().saturating_sub(1).max(1));
        // each class draws its initial negatives from a different slice
        let start = (offset * n_neg).min(negatives.len().saturating_sub(n_neg));
        let initial = &negatives[start..start + n_neg.min(negatives.len())];
        let pool: Vec<Vec<f64>> = negatives
            .iter()
            .enumerate()
            .filter(|(i, _)| *i < start || *i >= start + initial.len())
            .map(|(_, v)| v.clone())
            .take(cfg.pool_size)
            .collect();
        let mut samples: Vec<(Vec<f64>, bool)> = positives.iter().map(|p| (p.clone(), true)).collect();
        samples.extend(initial.iter().map(|n| (n.clone(), false)));
        train_classifier(&samples, &pool, &cfg.classifier, class)
    };
    let (small, small_report) = fit(&small_pos, LightClass::SmallLight, 0)?;
    let (large, large_report) = fit(&large_pos, LightClass::LargeLight, 1)?;

    let mut model = DetectorModel::new(small, large, 0.5, cfg.refine.clone());
    let calib: Vec<&LabeledPanorama> = data.iter().take(cfg.calibration_panoramas.max(1)).collect();
    let mut scores = Vec::new();
    let mut guides = Vec::new();
    let mut truths = Vec::new();
    for item in calib {
        let (s, g) = model.score_and_guide(&item.pano)?;
        truths.push(to_detection_mask(&item.mask, g.width(), g.height()));
        scores.push(s);
        guides.push(g);
    }
    model.threshold = calibrate_threshold(&scores, &guides, &truths, &cfg.refine)?;
    let report = DetectorReport {
        panoramas: data.len(),
        windows,
        small: small_report,
        large: large_report,
        threshold: model.threshold,
    };
    Ok((model, report))
}

/// Merged score map and grayscale guide at detection resolution.
pub(crate) fn merged_scores(model: &DetectorModel, p: &Panorama) -> Result<(Image, Image)> {
    let hog = model.hog;
    let gray = detection_gray(p);
    let gray_rot = rotate_pitch90_map(&gray);
    let (w, h) = gray.dims();
    let (up, rot) = panorama_windows(w, h);
    let f_up = window_features(&gray, false, &up, hog)?;
    let f_rot = window_features(&gray_rot, true, &rot, hog)?;
    let maps = score_from_features((&up, &f_up), (&rot, &f_rot), &model.small, &model.large, w, h)?;
    Ok((maps.merged, gray))
}
