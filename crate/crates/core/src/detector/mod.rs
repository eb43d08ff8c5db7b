//! Light-source detection on LDR panoramas.

mod classifier;
mod eval;
mod features;
mod refine;
mod scoring;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use classifier::{
    fit_logistic, sigmoid, train_classifier, ClassifierModel, FitReport, MiningRound, TrainConfig,
    TrainReport,
};
pub use eval::{eval_pr, eval_pr_report, PrCurve, PrReport};
pub use features::{
    cutoff_row, extract_patch_features, hog_descriptor, patch_side, FeatureVector, HogConfig, PatchSampler, PatchSpec,
    BASE_SIDE, BOTTOM_EXCLUSION, SCALES,
};
pub use refine::{
    calibrate_threshold, calibrated, clear_bottom, closing, opening, refine_mask, row_elevation, threshold_grid,
    CrfContext, RefineConfig,
};
pub use scoring::{
    detection_gray, merge_at, merge_scores, panorama_windows, rasterize, score_from_features, score_panorama,
    window_features, window_grid, ScoreMaps, DETECT_WIDTH,
};
pub use train::{train_detector, DetectorConfig, DetectorReport, LabeledPanorama};

use crate::error::{Error, Result};
use crate::geometry::Panorama;
use crate::image::{BinaryMask, Image};

pub const DETECTOR_VERSION: u32 = 1;

/// Trained detector: both classifiers plus the calibrated refinement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub version: u32,
    pub hog: HogConfig,
    pub small: ClassifierModel,
    pub large: ClassifierModel,
    pub threshold: f64,
    pub refine: RefineConfig,
}

/// Output of [`DetectorModel::detect`].
#[derive(Clone, Debug)]
pub struct Detection {
    /// Merged window scores at detection resolution.
    pub scores: Image,
    /// Refined light probability at detection resolution.
    pub probability: Image,
    /// Final mask at panorama resolution.
    pub mask: BinaryMask,
}

impl DetectorModel {
    pub fn new(small: ClassifierModel, large: ClassifierModel, threshold: f64, refine: RefineConfig) -> Self {
        Self {
            version: DETECTOR_VERSION,
            hog: HogConfig::default(),
            small,
            large,
            threshold,
            refine,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != DETECTOR_VERSION {
            return Err(Error::Unsupported(format!("detector version {}", self.version)));
        }
        self.hog.validate()?;
        self.small.validate()?;
        self.large.validate()?;
        self.refine.validate()?;
        let d = self.hog.feature_dim();
        if self.small.dim() != d || self.large.dim() != d {
            return Err(Error::dims("classifier dimension does not match the feature layout"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::domain(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let m: Self = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Merged scores and the grayscale guide, both at detection resolution.
    pub fn score_and_guide(&self, p: &Panorama) -> Result<(Image, Image)> {
        train::merged_scores(self, p)
    }

    /// Refined probability at detection resolution.
    pub fn probability(&self, scores: &Image, guide: &Image) -> Result<Image> {
        if self.refine.crf {
            Ok(CrfContext::new(guide, &self.refine)?.probability(scores, self.threshold))
        } else {
            Ok(scores.map(|s| calibrated(s, self.threshold, self.refine.kappa)))
        }
    }

    pub fn detect(&self, p: &Panorama) -> Result<Detection> {
        let (scores, guide) = self.score_and_guide(p)?;
        let probability = self.probability(&scores, &guide)?;
        let small = refine_mask(&scores, &guide, self.threshold, &self.refine)?;
        let mask = upscale_mask(&small, p.width(), p.height());
        Ok(Detection {
            scores,
            probability,
            mask,
        })
    }
}

/// Nearest-neighbour resampling of a mask, keeping the bottom band clear.
pub fn upscale_mask(m: &BinaryMask, width: usize, height: usize) -> BinaryMask {
    if m.dims() == (width, height) {
        return m.clone();
    }
    let (w, h) = m.dims();
    let mut out = BinaryMask::from_fn(width, height, |x, y| {
        let sx = ((x as f64 + 0.5) * w as f64 / width as f64) as usize;
        let sy = ((y as f64 + 0.5) * h as f64 / height as f64) as usize;
        m.get(sx.min(w - 1), sy.min(h - 1))
    });
    clear_bottom(&mut out);
    out
}
