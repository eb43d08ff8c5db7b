#![allow(dead_code)]

use lumiprobe::dataset::{gen_synthetic_pano, make_hdr_pairs, make_ldr_pairs, scene_normals, PairConfig, SynthConfig, TrainingPair};
use lumiprobe::rng::derive_rng;
use lumiprobe::CropSpec;

pub fn small_pair_config(crops: usize) -> PairConfig {
    PairConfig {
        crops_per_pano: crops,
        crop_width: 64,
        crop_height: 48,
        target_width: 64,
        ..PairConfig::default()
    }
}

/// `panos × crops` LDR pairs at 64×48 → 64×32 from synthetic rooms.
pub fn ldr_pairs(panos: u64, crops: usize, seed: u64) -> Vec<TrainingPair> {
    let pc = small_pair_config(crops);
    let mut out = Vec::new();
    for i in 0..panos {
        let mut rng = derive_rng(seed, i);
        let sc = gen_synthetic_pano(&mut rng, &SynthConfig { width: 256, ..SynthConfig::default() }).unwrap();
        let (f, c) = (sc.floor_elevation, sc.ceiling_elevation);
        let normals = move |s: &CropSpec| Some(scene_normals(f, c, s));
        out.extend(make_ldr_pairs(&sc.pano, &sc.mask, &normals, &mut rng, &pc, i).unwrap());
    }
    out
}

/// HDR counterpart with a fixed clamp median.
pub fn hdr_pairs(panos: u64, crops: usize, seed: u64) -> Vec<TrainingPair> {
    let pc = small_pair_config(crops);
    let mut out = Vec::new();
    for i in 0..panos {
        let mut rng = derive_rng(seed, 1000 + i);
        let sc = gen_synthetic_pano(&mut rng, &SynthConfig { width: 256, ..SynthConfig::default() }).unwrap();
        let (f, c) = (sc.floor_elevation, sc.ceiling_elevation);
        let normals = move |s: &CropSpec| Some(scene_normals(f, c, s));
        out.extend(make_hdr_pairs(&sc.pano, &normals, &mut rng, &pc, i, 1.0).unwrap());
    }
    out
}

pub mod fd;
pub mod schema;
