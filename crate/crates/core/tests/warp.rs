use std::f64::consts::{FRAC_PI_2, PI};

use lumiprobe::geometry::{mean_direction, pixel_center_dir, CropSpec, Direction, DynamicRange, Panorama};
use lumiprobe::image::Image;
use lumiprobe::warp::*;
use lumiprobe::Error;
use proptest::prelude::*;

fn normals(spec: &CropSpec, flat: impl Fn(usize, usize) -> bool) -> Image {
    Image::from_fn(spec.width, spec.height, 3, |x, y, c| {
        let n = if flat(x, y) { [0.0, 1.0, 0.0] } else { [0.0, 0.0, -1.0] };
        n[c]
    })
}

fn crop_spec() -> CropSpec {
    CropSpec { azimuth: 0.3, elevation: 0.0, hfov: 60f64.to_radians(), width: 64, height: 49 }
}

#[test]
fn ray_examples() {
    let v = Direction::from_angles(1.1, 0.4);
    let (t, s) = recenter_ray(&v, 0.0).unwrap();
    assert_eq!(t, 1.0);
    assert!(s.angle_to(&v) < 1e-15);

    let b = 30f64.to_radians();
    let (t, s) = recenter_ray(&Direction::FORWARD, b).unwrap();
    assert!((t - 0.5).abs() < 1e-12 && s.angle_to(&Direction::FORWARD) < 1e-12);

    let (t, s) = recenter_ray(&Direction::DOWN, b).unwrap();
    assert!((t - b.cos()).abs() < 1e-12);
    assert!((s.y + b.cos()).abs() < 1e-12 && (s.z - b.sin()).abs() < 1e-12);
    assert!((s.angle_to(&Direction::DOWN) - b).abs() < 1e-12);
    assert!(matches!(recenter_ray(&v, PI / 2.0).unwrap_err(), Error::Domain(_)));
}

#[test]
fn identity_and_uniform() {
    let m = Image::from_fn(64, 32, 3, |x, y, c| ((x * 7 + y * 3 + c) % 13) as f64 / 13.0);
    assert_eq!(recenter_map(&m, &WarpParams::identity()).unwrap(), m);
    let uni = Panorama::new(Image::filled(64, 32, 3, 0.25), DynamicRange::Ldr).unwrap();
    for beta in [0.2, 0.7, 1.2] {
        let out = recenter_pano(&uni, &WarpParams::new(beta, 1.0).unwrap()).unwrap();
        assert!(out.image().data().iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }
    assert!(WarpParams::new(BETA_MAX + 0.01, 0.0).is_err());
    assert!(WarpParams::new(-0.1, 0.0).is_err());
}

#[test]
fn nadir_light_moves_toward_minus_z() {
    let (w, h) = (512, 256);
    let beta = 30f64.to_radians();
    let sigma = 1.5f64.to_radians();
    let pano = Image::from_fn(w, h, 1, |x, y, _| {
        (-(pixel_center_dir(x, y, w, h).angle_to(&Direction::DOWN) / sigma).powi(2) / 2.0).exp()
    });
    let out = recenter_map(&pano, &WarpParams::new(beta, 0.0).unwrap()).unwrap();
    let c = mean_direction(&out).unwrap();
    assert!(c.z < 0.0 && c.x.abs() < 1e-6);
    let d = c.angle_to(&Direction::DOWN);
    assert!((d - nadir_image_distance(beta)).abs() < 0.5f64.to_radians(), "{}", d.to_degrees());
    assert!((nadir_source_distance(&WarpParams::new(beta, 0.0).unwrap()) - beta).abs() < 1e-12);
}

#[test]
fn walls_only_gives_zero_beta() {
    let spec = crop_spec();
    let p = select_beta(&normals(&spec, |_, _| false), &spec).unwrap();
    assert_eq!(p.beta, 0.0);
    assert_eq!(p.axis_azimuth, spec.azimuth);
}

#[test]
fn floor_in_bottom_half() {
    let spec = CropSpec { width: 256, height: 192, ..crop_spec() };
    let p = select_beta(&normals(&spec, |_, y| y >= 96), &spec).unwrap();
    // Independent pinhole ray through the bottom-center pixel.
    let f = 128.0 / 30f64.to_radians().tan();
    let dy: f64 = 191.5 - 96.0;
    let dx: f64 = 128.5 - 128.0;
    let want = (dy / dx.hypot(f)).atan();
    assert!((p.beta - want).abs() < 0.5f64.to_radians(), "{} vs {}", p.beta, want);
}

#[test]
fn flat_region_ending_at_horizon() {
    let spec = crop_spec();
    let p = select_beta(&normals(&spec, |_, y| y <= 24), &spec).unwrap();
    assert!(p.beta.abs() < 1e-12);
}

#[test]
fn tiny_regions_are_ignored() {
    let spec = crop_spec();
    let p = select_beta(&normals(&spec, |x, y| x == 3 && y == 40), &spec).unwrap();
    assert_eq!(p.beta, 0.0);
    let bad = Image::new(10, 10, 3);
    assert!(matches!(select_beta(&bad, &spec).unwrap_err(), Error::Dimension(_)));
}

proptest! {
    #[test]
    fn exactly_one_nonnegative_root(az in -PI..PI, el in -(FRAC_PI_2 - 1e-4)..(FRAC_PI_2 - 1e-4), beta in 0.0..BETA_MAX) {
        let v = Direction::from_angles(az, el);
        let (neg, pos) = recenter_roots(&v, beta);
        prop_assert!(neg < 0.0 && pos >= 0.0);
        let s = beta.sin();
        let residual = pos * pos + 2.0 * v.z * s * pos + s * s - 1.0;
        prop_assert!(residual.abs() < 1e-12);
        let (t, src) = recenter_ray(&v, beta).unwrap();
        prop_assert_eq!(t, pos);
        prop_assert!((src.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn source_lies_on_the_ray(az in -PI..PI, el in -1.5..1.5f64, beta in 0.0..BETA_MAX, axis in -PI..PI) {
        let v = Direction::from_angles(az, el);
        let p = WarpParams::new(beta, axis).unwrap();
        let src = warp_source(&v, &p);
        // src − c is parallel to v, with c the displaced center.
        let c = Direction::FORWARD.rotate_yaw(axis);
        let s = beta.sin();
        let (dx, dy, dz) = (src.x - s * c.x, src.y - s * c.y, src.z - s * c.z);
        let cross = (dy * v.z - dz * v.y).hypot(dz * v.x - dx * v.z).hypot(dx * v.y - dy * v.x);
        prop_assert!(cross < 1e-9);
        prop_assert!(dx * v.x + dy * v.y + dz * v.z >= 0.0);
    }
}
