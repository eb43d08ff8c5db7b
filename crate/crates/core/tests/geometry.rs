use std::f64::consts::{FRAC_PI_2, PI, TAU};

use lumiprobe::geometry::*;
use lumiprobe::image::Image;
use lumiprobe::rng::derive_rng;
use proptest::prelude::*;
use rand::Rng;

fn close(a: &Direction, b: &Direction) -> bool {
    a.angle_to(b) < 1e-9
}

fn smooth(w: usize, h: usize) -> Image {
    Image::from_fn(w, h, 3, |x, y, c| {
        let d = pixel_center_dir(x, y, w, h);
        0.5 + 0.2 * d.x + 0.15 * d.y * (c as f64 + 1.0) / 3.0 + 0.1 * d.z
    })
}

#[test]
fn pixel_conventions() {
    let (w, h) = (512, 256);
    assert!(close(&pixel_to_dir(256.0, 128.0, w, h).unwrap(), &Direction::FORWARD));
    assert!(close(&pixel_to_dir(256.0, 0.0, w, h).unwrap(), &Direction::UP));
    assert!(close(&pixel_to_dir(0.0, 128.0, w, h).unwrap(), &Direction::new(0.0, 0.0, -1.0).unwrap()));
    let (u, v) = dir_to_pixel(&Direction::FORWARD, w, h);
    assert!((u - 256.0).abs() < 1e-9 && (v - 128.0).abs() < 1e-9);
    let (u, v) = dir_to_pixel(&Direction::UP, w, h);
    assert_eq!((u, v), (256.0, 0.0));
    assert!(pixel_to_dir(512.0, 10.0, w, h).is_err());
    assert!(pixel_to_dir(10.0, -0.1, w, h).is_err());
}

#[test]
fn round_trip_1000_samples() {
    let mut rng = derive_rng(4, 0);
    let (w, h) = (512, 256);
    for _ in 0..1000 {
        let u = rng.random_range(0.0..w as f64);
        let v = rng.random_range(0.01..h as f64 - 0.01);
        let (u2, v2) = dir_to_pixel(&pixel_to_dir(u, v, w, h).unwrap(), w, h);
        let du = (u2 - u).abs().min(w as f64 - (u2 - u).abs());
        assert!(du.hypot(v2 - v) < 1e-6, "({u}, {v}) -> ({u2}, {v2})");
    }
}

#[test]
fn solid_angle_sums_and_rows() {
    for h in [8, 64, 128, 256] {
        let s = solid_angles(2 * h, h).unwrap();
        assert!((s.total() - 4.0 * PI).abs() / (4.0 * PI) < 1e-9);
        assert!(s.rows().iter().all(|&v| v > 0.0));
    }
    // Each row is a band of the sphere: (2π/W)(sin top − sin bottom).
    let (w, h) = (512, 256);
    let s = solid_angles(w, h).unwrap();
    let band = |y: usize| {
        let top = FRAC_PI_2 - PI * y as f64 / h as f64;
        let bot = FRAC_PI_2 - PI * (y + 1) as f64 / h as f64;
        TAU / w as f64 * (top.sin() - bot.sin())
    };
    let ratio = s.row(h / 2) / s.row(0);
    assert!((ratio - band(h / 2) / band(0)).abs() / ratio < 1e-9);
    assert_eq!(s.get(0, 7), s.get(311, 7));
    assert!(solid_angles(10, 4).is_err());
}

#[test]
fn uniform_crop_and_center_sample() {
    let pano = Panorama::new(Image::filled(256, 128, 3, 0.3), DynamicRange::Ldr).unwrap();
    let spec = CropSpec { azimuth: 0.4, elevation: -0.2, hfov: 1.0, width: 65, height: 49 };
    let crop = extract_crop(&pano, &spec).unwrap();
    assert!(crop.data().iter().all(|&v| (v - 0.3).abs() < 1e-12));

    let pano = Panorama::new(smooth(256, 128), DynamicRange::Ldr).unwrap();
    let crop = extract_crop(&pano, &spec).unwrap();
    let mut want = [0.0; 3];
    sample_dir(pano.image(), &Direction::from_angles(spec.azimuth, spec.elevation), &mut want);
    for c in 0..3 {
        assert!((crop.get(32, 24, c) - want[c]).abs() < 1e-9);
    }
}

#[test]
fn corner_ray_matches_pinhole_model() {
    let spec = CropSpec { azimuth: 0.0, elevation: 0.0, hfov: 60f64.to_radians(), width: 256, height: 192 };
    let f = 128.0 / 30f64.to_radians().tan();
    let (dx, dy): (f64, f64) = (0.5 - 128.0, 96.0 - 0.5);
    let want = (dx.hypot(dy) / f).atan();
    let got = spec.ray(0.5, 0.5).angle_to(&Direction::FORWARD);
    assert!((got - want).abs() < 1e-12);
    let vfov = 2.0 * (30f64.to_radians().tan() * 0.75).atan();
    assert!((spec.vfov() - vfov).abs() < 1e-12);
    let back = spec.project(&spec.ray(17.25, 100.5)).unwrap();
    assert!((back.0 - 17.25).abs() < 1e-9 && (back.1 - 100.5).abs() < 1e-9);
}

#[test]
fn azimuth_rotation_examples() {
    let pano = Panorama::new(smooth(512, 256), DynamicRange::Ldr).unwrap();
    assert_eq!(rotate_azimuth(&pano, TAU).image(), pano.image());
    let half = rotate_azimuth(&pano, PI);
    for y in [0, 100, 255] {
        for x in [0, 13, 300] {
            assert_eq!(half.image().pixel((x + 256) % 512, y), pano.image().pixel(x, y));
        }
    }
    let k = 37.0;
    let there = rotate_azimuth(&pano, TAU * k / 512.0);
    assert_eq!(rotate_azimuth(&there, -TAU * k / 512.0).image(), pano.image());
}

#[test]
fn pitch_rotation_examples() {
    let (w, h) = (256, 128);
    let mut img = Image::new(w, h, 1);
    for x in 0..w {
        img.set(x, 0, 0, 1.0);
    }
    let rot = rotate_pitch90_map(&img);
    let (_, v) = dir_to_pixel(&original_to_pitch90(Direction::UP), w, h);
    assert!((v - h as f64 / 2.0).abs() < 1e-9, "zenith lands on row {v}");
    let (mut best, mut at) = (0.0, 0);
    for y in 0..h {
        let s: f64 = (0..w).map(|x| rot.get(x, y, 0)).sum();
        if s > best {
            best = s;
            at = y;
        }
    }
    assert!(at.abs_diff(h / 2) <= 1, "bright row {at}");

    let uni = Image::filled(w, h, 3, 0.6);
    assert!(rotate_pitch90_map(&uni).data().iter().all(|&v| (v - 0.6).abs() < 1e-12));

    let m = smooth(w, h);
    let back = rotate_pitch90_inverse_map(&rotate_pitch90_map(&m));
    let mae = m.data().iter().zip(back.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / m.data().len() as f64;
    assert!(mae < 2.0 / 255.0, "mean abs error {mae}");
}

#[test]
fn panorama_validation() {
    assert!(Panorama::new(Image::new(100, 40, 3), DynamicRange::Ldr).is_err());
    assert!(Panorama::new(Image::filled(64, 32, 3, 1.5), DynamicRange::Ldr).is_err());
    assert!(Panorama::new(Image::filled(64, 32, 3, -1.0), DynamicRange::Hdr).is_err());
    assert!(Panorama::new(Image::filled(64, 32, 3, f64::NAN), DynamicRange::Hdr).is_err());
    assert!(Panorama::new(Image::filled(64, 32, 3, 50.0), DynamicRange::Hdr).is_ok());
}

#[test]
fn mean_direction_of_a_spot() {
    let (w, h) = (256, 128);
    let mut m = Image::new(w, h, 1);
    m.set(40, 30, 0, 1.0);
    let d = mean_direction(&m).unwrap();
    assert!(d.angle_to(&pixel_center_dir(40, 30, w, h)) < 1e-12);
    assert!(mean_direction(&Image::new(w, h, 1)).is_none());
}

proptest! {
    #[test]
    fn directions_are_unit(az in -PI..PI, el in -FRAC_PI_2..FRAC_PI_2) {
        let d = Direction::from_angles(az, el);
        prop_assert!((d.norm() - 1.0).abs() < 1e-9);
        prop_assert!((d.elevation() - el).abs() < 1e-9);
    }

    #[test]
    fn round_trip_any_size(h in 2usize..300, fu in 0.0..1.0f64, fv in 0.001..0.999f64) {
        let w = 2 * h;
        let (u, v) = (fu * w as f64, fv * h as f64);
        let (u2, v2) = dir_to_pixel(&pixel_to_dir(u, v, w, h).unwrap(), w, h);
        let du = (u2 - u).abs().min(w as f64 - (u2 - u).abs());
        prop_assert!(du < 1e-6 && (v2 - v).abs() < 1e-6);
    }

    #[test]
    fn integer_rotations_invert(k in -600i64..600) {
        let m = smooth(64, 32);
        let d = TAU * k as f64 / 64.0;
        prop_assert_eq!(rotate_azimuth_map(&rotate_azimuth_map(&m, d), -d), m);
    }

    #[test]
    fn yaw_and_pitch_preserve_angles(a in -PI..PI, b in -PI..PI, az in -PI..PI, el in -1.5..1.5f64) {
        let p = Direction::from_angles(az, el);
        let q = Direction::FORWARD;
        let before = p.angle_to(&q);
        let after = p.rotate_yaw(a).rotate_pitch(b).angle_to(&q.rotate_yaw(a).rotate_pitch(b));
        prop_assert!((before - after).abs() < 1e-9);
    }
}
