use lumiprobe::geometry::{pixel_center_dir, solid_angles};
use lumiprobe::image::Image;
use lumiprobe::loss::*;
use proptest::prelude::*;

#[test]
fn progress_exponent_is_quantized() {
    let p = TrainProgress { e: 1.3, alpha: 3.0 };
    assert_eq!(p.exponent(), 3.75);
    assert_eq!(TrainProgress::new(0.24).exponent(), 0.0);
    let mut q = TrainProgress::new(0.0);
    q.advance(0.5);
    q.advance(-1.0);
    assert_eq!(q.e, 0.5);
}

#[test]
fn exponent_zero_rows_sum_to_one() {
    let k = FilterKernel::build(64, 32, 0.0).unwrap();
    for y in 0..32 {
        assert!((k.row_sum(y) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn uniform_map_scales_as_one_over_k_plus_one() {
    for k in [0.0, 1.0, 5.0, 10.0, 20.0] {
        let kern = FilterKernel::build(128, 64, k).unwrap();
        let out = kern.apply(&Image::filled(128, 64, 1, 0.7)).unwrap();
        let want = 0.7 / (k + 1.0);
        for &v in out.data() {
            assert!((v - want).abs() / want < 1e-3, "k {k}: {v} vs {want}");
        }
    }
}

#[test]
fn high_exponent_concentrates_near_the_normal() {
    let (w, h) = (128, 64);
    let k = FilterKernel::build(w, h, 80.0).unwrap();
    let (x, y) = (40, 20);
    let wts = k.weights_at(x, y);
    let n = pixel_center_dir(x, y, w, h);
    let total: f64 = wts.data().iter().sum();
    let mut near = 0.0;
    for yy in 0..h {
        for xx in 0..w {
            if pixel_center_dir(xx, yy, w, h).angle_to(&n) < 20f64.to_radians() {
                near += wts.get(xx, yy, 0);
            }
        }
    }
    // Mass of (cos θ)^80 outside 20° is about cos(20°)^82 ≈ 0.6%.
    assert!(near / total > 0.99, "{}", near / total);
}

#[test]
fn l2_with_unit_difference_is_mean_solid_angle() {
    let (w, h) = (32, 16);
    let s = solid_angles(w, h).unwrap();
    let y = Image::filled(w, h, 3, 1.5);
    let t = Image::filled(w, h, 3, 0.5);
    let (l, g) = l2_loss(&y, &t, &s).unwrap();
    let mean = s.total() / (w * h) as f64;
    assert!((l - mean).abs() < 1e-12);
    assert_eq!(g.get(3, 7, 1), 2.0 * s.row(7) / (w * h * 3) as f64);
    let (l, g) = l2_loss(&y, &y, &s).unwrap();
    assert_eq!(l, 0.0);
    assert!(g.data().iter().all(|&v| v == 0.0));
}

#[test]
fn cos_of_uniform_against_zero() {
    let c = 0.8;
    let k = FilterKernel::build(64, 32, 1.0).unwrap();
    let (l, _) = cos_loss_with(&Image::filled(64, 32, 1, c), &Image::new(64, 32, 1), &k).unwrap();
    assert!((l - (c / 2.0) * (c / 2.0)).abs() < 1e-3, "{l}");
    let (l, g) = cos_loss_with(&Image::filled(64, 32, 1, c), &Image::filled(64, 32, 1, c), &k).unwrap();
    assert_eq!(l, 0.0);
    assert!(g.data().iter().all(|&v| v == 0.0));
}

#[test]
fn mismatched_shapes_are_rejected() {
    let s = solid_angles(32, 16).unwrap();
    assert!(l2_loss(&Image::new(32, 16, 3), &Image::new(32, 16, 1), &s).is_err());
    assert!(FilterKernel::build(30, 16, 1.0).is_err());
    assert!(FilterKernel::build(32, 16, -1.0).is_err());
    let k = FilterKernel::build(32, 16, 1.0).unwrap();
    assert!(k.apply(&Image::new(32, 16, 3)).is_err());
}

#[test]
fn ldr_and_hdr_terms_use_the_fixed_weights() {
    let (w, h) = (32, 16);
    let y = Image::filled(w, h, 3, 0.6);
    let t = Image::filled(w, h, 3, 0.4);
    let m = Image::filled(w, h, 1, 0.9);
    let z = Image::new(w, h, 1);
    let p = TrainProgress::new(2.0);
    let s = solid_angles(w, h).unwrap();
    let l2 = l2_loss(&y, &t, &s).unwrap().0;

    let out = loss_ldr(&y, &m, &t, &z, &TrainProgress { alpha: 7.0, ..p }).unwrap();
    let cos = cos_loss(&m, &z, &p).unwrap().0;
    assert!((out.terms[0].1 - 100.0 * l2).abs() < 1e-12);
    assert!((out.terms[1].1 - cos).abs() < 1e-12);
    assert!((out.total - 100.0 * l2 - cos).abs() < 1e-12);

    let out = loss_hdr(&y, &m, &t, &z, &p).unwrap();
    let li = l2_loss(&m, &z, &s).unwrap().0;
    assert!((out.total - (10.0 * l2 + cos + 0.1 * li)).abs() < 1e-12);
}

#[test]
fn kernel_cache_returns_the_same_kernel() {
    let a = kernel(32, 16, 3.0).unwrap();
    let b = kernel(32, 16, 3.0).unwrap();
    assert!(std::sync::Arc::ptr_eq(&a, &b));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn filter_commutes_with_column_shifts(shift in 0usize..32, k in 0.0..12.0f64, seed in 0u64..1000) {
        let (w, h) = (32, 16);
        let m = Image::from_fn(w, h, 1, |x, y, _| (((x * 31 + y * 17) as u64 ^ seed) % 23) as f64 / 23.0);
        let kern = kernel(w, h, (k * 4.0).floor() / 4.0).unwrap();
        let shifted = Image::from_fn(w, h, 1, |x, y, _| m.get((x + shift) % w, y, 0));
        let a = kern.apply(&shifted).unwrap();
        let b = kern.apply(&m).unwrap();
        for y in 0..h {
            for x in 0..w {
                prop_assert!((a.get(x, y, 0) - b.get((x + shift) % w, y, 0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn filter_is_nonnegative_and_bounded(k in 0.0..20.0f64, seed in 0u64..1000) {
        let (w, h) = (32, 16);
        let m = Image::from_fn(w, h, 1, |x, y, _| (((x * 7 + y * 5) as u64 ^ seed) % 5) as f64);
        let kern = kernel(w, h, (k * 4.0).floor() / 4.0).unwrap();
        let out = kern.apply(&m).unwrap();
        let max = m.data().iter().cloned().fold(0.0, f64::max);
        prop_assert!(out.data().iter().all(|&v| v >= 0.0 && v <= max + 1e-9));
    }

    #[test]
    fn losses_are_nonnegative(a in 0.0..2.0f64, b in 0.0..2.0f64) {
        let s = solid_angles(32, 16).unwrap();
        let y = Image::filled(32, 16, 3, a);
        let t = Image::filled(32, 16, 3, b);
        prop_assert!(l2_loss(&y, &t, &s).unwrap().0 >= 0.0);
        let k = kernel(32, 16, 1.0).unwrap();
        let y1 = Image::filled(32, 16, 1, a);
        let t1 = Image::filled(32, 16, 1, b);
        prop_assert!(cos_loss_with(&y1, &t1, &k).unwrap().0 >= 0.0);
    }
}

#[test]
fn point_light_lights_its_hemisphere() {
    let (w, h) = (64, 32);
    let mut m = Image::new(w, h, 1);
    m.set(32, 16, 0, 1.0);
    let k = FilterKernel::build(w, h, 1.0).unwrap();
    let out = k.apply(&m).unwrap();
    let light = pixel_center_dir(32, 16, w, h);
    for y in 0..h {
        for x in 0..w {
            let n = pixel_center_dir(x, y, w, h);
            let facing = n.x * light.x + n.y * light.y + n.z * light.z;
            if facing < -0.05 {
                assert_eq!(out.get(x, y, 0), 0.0);
            }
        }
    }
    assert!(out.get(32, 16, 0) > 0.0);
}
