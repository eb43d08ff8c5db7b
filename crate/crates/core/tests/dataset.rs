mod common;

use std::f64::consts::{PI, TAU};

use lumiprobe::dataset::*;
use lumiprobe::geometry::{pixel_center_dir, Direction, DynamicRange, Panorama};
use lumiprobe::image::{percentile, BinaryMask, Image};
use lumiprobe::rng::{derive_rng, rng_from_seed};
use lumiprobe::CropSpec;
use proptest::prelude::*;

/// Dim room with one disc light of radius 8° at `(az, el)`.
fn one_light(w: usize, az: f64, el: f64) -> (Panorama, BinaryMask) {
    let h = w / 2;
    let c = Direction::from_angles(az, el);
    let mask = BinaryMask::from_fn(w, h, |x, y| pixel_center_dir(x, y, w, h).angle_to(&c) < 8f64.to_radians());
    let img = Image::from_fn(w, h, 3, |x, y, _| if mask.get(x, y) { 50.0 } else { 0.5 });
    (Panorama::new(img, DynamicRange::Hdr).unwrap(), mask)
}

fn peak_column(m: &Image) -> usize {
    (0..m.width())
        .max_by(|&a, &b| {
            let sa: f64 = (0..m.height()).map(|y| m.get(a, y, 0)).sum();
            let sb: f64 = (0..m.height()).map(|y| m.get(b, y, 0)).sum();
            sa.total_cmp(&sb)
        })
        .unwrap()
}

fn col_dist(a: usize, b: usize, w: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(w - d)
}

#[test]
fn fixed_seed_gives_eight_identical_pairs() {
    let cfg = PairConfig { crop_width: 64, crop_height: 48, target_width: 64, ..PairConfig::default() };
    let make = || {
        let mut rng = derive_rng(9, 0);
        let sc = gen_synthetic_pano(&mut rng, &SynthConfig { width: 128, ..SynthConfig::default() }).unwrap();
        let (f, c) = (sc.floor_elevation, sc.ceiling_elevation);
        make_ldr_pairs(&sc.pano, &sc.mask, &move |s: &CropSpec| Some(scene_normals(f, c, s)), &mut rng, &cfg, 0).unwrap()
    };
    let a = make();
    assert_eq!(a.len(), 8);
    assert_eq!(a, make());
    for p in &a {
        assert_eq!(p.input.dims(), (64, 48));
        assert_eq!(p.target_rgb.dims(), (64, 32));
        assert!(p.target_aux.data().iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(p.meta.crop.hfov >= 50f64.to_radians() - 1e-12 && p.meta.crop.hfov <= 70f64.to_radians() + 1e-12);
    }
}

#[test]
fn light_dead_ahead_lands_on_the_center_column() {
    let w = 256;
    let cfg = PairConfig { crops_per_pano: 1, crop_width: 64, crop_height: 48, target_width: w, ..PairConfig::default() };
    for seed in 0..6 {
        let spec = sample_crop(&mut rng_from_seed(seed), &cfg);
        let (pano, mask) = one_light(512, spec.azimuth, 0.3);
        let normals = |s: &CropSpec| Some(scene_normals(-0.6, 0.6, s));
        let pairs = make_ldr_pairs(&pano, &mask, &normals, &mut rng_from_seed(seed), &cfg, 0).unwrap();
        assert_eq!(pairs[0].meta.crop, spec);
        let col = peak_column(&pairs[0].target_aux);
        assert!(col_dist(col, w / 2, w) <= 8, "seed {seed}: column {col}");
    }
}

#[test]
fn dark_panorama_gives_zero_targets() {
    let pano = Panorama::new(Image::new(128, 64, 3), DynamicRange::Hdr).unwrap();
    let cfg = PairConfig { crops_per_pano: 2, crop_width: 32, crop_height: 24, target_width: 32, ..PairConfig::default() };
    let none = |_: &CropSpec| None;
    for p in make_ldr_pairs(&pano, &BinaryMask::new(128, 64), &none, &mut rng_from_seed(1), &cfg, 0).unwrap() {
        assert!(p.input.data().iter().chain(p.target_rgb.data()).chain(p.target_aux.data()).all(|&v| v == 0.0));
    }
    for p in make_hdr_pairs(&pano, &none, &mut rng_from_seed(1), &cfg, 0, 1.0).unwrap() {
        assert!(p.target_aux.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn hdr_target_examples() {
    let mut img = Image::filled(4, 2, 3, 0.5);
    img.set(1, 1, 2, 100.0);
    let t = make_hdr_target(&img, 1.0).unwrap();
    assert_eq!(t.get(1, 1, 0), 2.0);
    assert_eq!(t.get(0, 0, 0), 0.0);
    assert!(make_hdr_target(&img, 1000.0).unwrap().data().iter().all(|&v| v == 0.0));
    assert!(make_hdr_target(&img, 0.0).is_err());
    assert!(make_hdr_target(&img, -2.0).is_err());
}

#[test]
fn hdr_pairs_need_hdr_input() {
    let pano = Panorama::new(Image::filled(64, 32, 3, 0.5), DynamicRange::Ldr).unwrap();
    let none = |_: &CropSpec| None;
    assert!(make_hdr_pairs(&pano, &none, &mut rng_from_seed(0), &PairConfig::default(), 0, 1.0).is_err());
}

#[test]
fn tonemap_examples() {
    let c = tonemap(&Image::filled(8, 4, 3, 17.0));
    let want = 0.8f64.powf(1.0 / 2.2);
    assert!(c.data().iter().all(|&v| (v - want).abs() < 1e-12));
    assert!(tonemap(&Image::new(8, 4, 3)).data().iter().all(|&v| v == 0.0));
}

#[test]
fn corpus_median_of_max_channels() {
    let a = Image::from_fn(2, 1, 3, |x, _, c| if c == 1 { x as f64 + 1.0 } else { 0.0 });
    let b = Image::filled(1, 1, 3, 10.0);
    assert_eq!(corpus_median([&a, &b]), 2.0);
}

#[test]
fn split_is_disjoint_and_85_15() {
    let ids: Vec<u64> = (0..100).collect();
    let (train, test) = split_sources(&ids, 4);
    assert_eq!((train.len(), test.len()), (85, 15));
    assert!(train.iter().all(|id| !test.contains(id)));
    assert_eq!(split_sources(&ids, 4), (train, test));
    let (tr, te) = split_sources(&[3, 7], 0);
    assert_eq!((tr.len(), te.len()), (1, 1));
}

#[test]
fn no_lights_means_empty_mask() {
    let cfg = SynthConfig { width: 64, lights_min: 0, lights_max: 0, ..SynthConfig::default() };
    let sc = gen_synthetic_pano(&mut rng_from_seed(3), &cfg).unwrap();
    assert!(sc.mask.is_empty());
}

#[test]
fn emitters_are_ten_times_the_background_p99() {
    for seed in 10..14 {
        let sc = gen_synthetic_pano(&mut rng_from_seed(seed), &SynthConfig { width: 128, ..SynthConfig::default() }).unwrap();
        let m = max_channel(sc.pano.image());
        let mut rest: Vec<f64> = m.data().iter().zip(sc.mask.data()).filter(|(_, &l)| !l).map(|(v, _)| *v).collect();
        let p99 = percentile(&mut rest, 0.99);
        let lit = m.data().iter().zip(sc.mask.data()).filter(|(_, &l)| l).map(|(v, _)| *v);
        assert!(lit.into_iter().all(|v| v >= 10.0 * p99 * (1.0 - 1e-12)), "seed {seed}");
    }
}

#[test]
fn synthetic_scenes_are_reproducible() {
    let cfg = SynthConfig { width: 128, ..SynthConfig::default() };
    let a = gen_synthetic_pano(&mut rng_from_seed(5), &cfg).unwrap();
    let b = gen_synthetic_pano(&mut rng_from_seed(5), &cfg).unwrap();
    assert_eq!(a.pano.image(), b.pano.image());
    assert_eq!(a.annotation(), b.annotation());
    assert_eq!(a.annotation().class_map(&a.mask), a.class_map);
    assert!(SynthConfig { width: 7, ..cfg.clone() }.validate().is_err());
    assert!(SynthConfig { lights_min: 5, lights_max: 2, ..cfg }.validate().is_err());
}

#[test]
fn manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = common::ldr_pairs(1, 2, 7);
    let entries: Vec<_> = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| save_pair(dir.path(), &format!("p{i}"), Split::Train, p).unwrap())
        .collect();
    let m = Manifest { version: MANIFEST_VERSION, mode: PairMode::Ldr, seed: 7, clamp_median: None, pairs: entries };
    m.save(dir.path().join("manifest.json")).unwrap();
    let back = Manifest::load(dir.path().join("manifest.json")).unwrap();
    assert_eq!(back, m);
    let p = load_pair(dir.path(), &back.pairs[1]).unwrap();
    assert_eq!(p.target_aux, pairs[1].target_aux);
    let err = p.input.data().iter().zip(pairs[1].input.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 0.5 / 255.0 + 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn tonemap_ignores_exposure(scale in 1e-3..1e3f64, seed in 0u64..500) {
        let img = Image::from_fn(16, 8, 3, |x, y, c| (((x * 13 + y * 7 + c) as u64 ^ seed) % 97) as f64 / 9.0);
        let a = tonemap(&img);
        let b = tonemap(&img.map(|v| v * scale));
        prop_assert!(a.data().iter().zip(b.data()).all(|(p, q)| (p - q).abs() < 1e-12));
        prop_assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn unwarped_mask_peak_follows_the_light(seed in 0u64..1000, az in -PI..PI) {
        let w = 128;
        let cfg = PairConfig { crops_per_pano: 1, crop_width: 16, crop_height: 12, target_width: w, ..PairConfig::default() };
        let (pano, mask) = one_light(256, az, 0.0);
        let none = |_: &CropSpec| None;
        let p = &make_ldr_pairs(&pano, &mask, &none, &mut rng_from_seed(seed), &cfg, 0).unwrap()[0];
        let rel = (az - p.meta.crop.azimuth + PI).rem_euclid(TAU) - PI;
        let want = ((rel + PI) / TAU * w as f64).floor() as usize % w;
        prop_assert!(col_dist(peak_column(&p.target_aux), want, w) <= 8);
    }
}
