//! On-disk dataset layout: one JSON manifest plus PNG inputs, PNG rgb
//! targets and PFM auxiliary targets.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PairMeta, TrainingPair};
use crate::envmap::{read_pfm, read_png, write_pfm, write_png};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    Ldr,
    Hdr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub pair_id: String,
    pub split: Split,
    pub input: String,
    pub target_rgb: String,
    pub target_aux: String,
    #[serde(flatten)]
    pub meta: PairMeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub mode: PairMode,
    pub seed: u64,
    /// Linear intensity below which HDR targets are clamped to zero.
    pub clamp_median: Option<f64>,
    pub pairs: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let m: Manifest = serde_json::from_slice(&fs::read(path)?)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Unsupported(format!("manifest version {}", m.version)));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.pairs.iter().filter(move |e| e.split == split)
    }
}

/// Writes the images of one pair under `dir` and returns its entry.
pub fn save_pair(dir: &Path, pair_id: &str, split: Split, pair: &TrainingPair) -> Result<ManifestEntry> {
    let input = format!("{pair_id}_input.png");
    let target_rgb = format!("{pair_id}_rgb.png");
    let target_aux = format!("{pair_id}_aux.pfm");
    write_png(dir.join(&input), &pair.input)?;
    write_png(dir.join(&target_rgb), &pair.target_rgb)?;
    write_pfm(dir.join(&target_aux), &pair.target_aux)?;
    Ok(ManifestEntry {
        pair_id: pair_id.to_string(),
        split,
        input,
        target_rgb,
        target_aux,
        meta: pair.meta.clone(),
    })
}

pub fn load_pair(dir: &Path, entry: &ManifestEntry) -> Result<TrainingPair> {
    let input = read_png(dir.join(&entry.input))?;
    let target_rgb = read_png(dir.join(&entry.target_rgb))?;
    let target_aux = read_pfm(dir.join(&entry.target_aux))?;
    let input = if input.channels() == 1 { input.broadcast(3) } else { input };
    let target_rgb = if target_rgb.channels() == 1 { target_rgb.broadcast(3) } else { target_rgb };
    Ok(TrainingPair {
        input,
        target_rgb,
        target_aux,
        meta: entry.meta.clone(),
    })
}
