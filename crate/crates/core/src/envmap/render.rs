use rayon::prelude::*;

use crate::dataset::tonemap;
use crate::error::{Error, Result};
use crate::geometry::{resize_area, sample_dir, Direction};
use crate::image::Image;
use crate::loss;

/// Largest environment resolution used for preview filtering.
const PREVIEW_HEIGHT: usize = 64;

/// Linear radiance of a diffuse sphere and its coverage.
#[derive(Clone, Debug)]
pub struct SphereRender {
    pub radiance: Image,
    pub normals: Vec<Option<Direction>>,
}

/// Unit-albedo Lambertian sphere under `env`, orthographic camera looking
/// along `+z`. Background pixels are zero.
pub fn render_diffuse_sphere_linear(env: &Image, size: usize) -> Result<SphereRender> {
    if env.width() != 2 * env.height() || env.height() == 0 {
        return Err(Error::domain("environment map must be 2:1"));
    }
    if size == 0 {
        return Err(Error::domain("render size must be positive"));
    }
    let small = if env.height() > PREVIEW_HEIGHT {
        resize_area(env, 2 * PREVIEW_HEIGHT, PREVIEW_HEIGHT)
    } else {
        env.clone()
    };
    let (w, h) = small.dims();
    let kernel = loss::kernel(w, h, 1.0)?;
    let c = small.channels();
    let mut filtered = Image::new(w, h, c);
    for ch in 0..c {
        let f = kernel.apply(&small.channel(ch))?;
        for (i, v) in f.data().iter().enumerate() {
            filtered.data_mut()[i * c + ch] = *v;
        }
    }
    let normals: Vec<Option<Direction>> = (0..size * size)
        .map(|i| {
            let sx = ((i % size) as f64 + 0.5) / size as f64 * 2.0 - 1.0;
            let sy = 1.0 - ((i / size) as f64 + 0.5) / size as f64 * 2.0;
            let r2 = sx * sx + sy * sy;
            (r2 <= 1.0).then(|| Direction {
                x: sx,
                y: sy,
                z: -(1.0 - r2).sqrt(),
            })
        })
        .collect();
    let mut radiance = Image::new(size, size, c);
    radiance
        .data_mut()
        .par_chunks_mut(c)
        .zip(normals.par_iter())
        .for_each(|(px, n)| {
            if let Some(n) = n {
                sample_dir(&filtered, n, px);
            }
        });
    Ok(SphereRender { radiance, normals })
}

/// Tonemapped preview of [`render_diffuse_sphere_linear`].
pub fn render_diffuse_sphere(env: &Image, size: usize) -> Result<Image> {
    let r = render_diffuse_sphere_linear(env, size)?;
    let c = r.radiance.channels();
    let disk: Vec<f64> = r
        .radiance
        .data()
        .chunks_exact(c)
        .zip(&r.normals)
        .filter(|(_, n)| n.is_some())
        .flat_map(|(p, _)| p.iter().copied())
        .collect();
    let n = disk.len() / c;
    let mapped = tonemap(&Image::from_vec(n, 1, c, disk)?);
    let mut out = Image::new(size, size, c);
    let mut k = 0;
    for (i, n) in r.normals.iter().enumerate() {
        if n.is_some() {
            out.data_mut()[i * c..(i + 1) * c].copy_from_slice(&mapped.data()[k * c..(k + 1) * c]);
            k += 1;
        }
    }
    Ok(out)
}

/// Normal of the brightest (by channel sum) pixel on the rendered disk.
pub fn brightest_normal(r: &SphereRender) -> Option<Direction> {
    let c = r.radiance.channels();
    r.radiance
        .data()
        .chunks_exact(c)
        .zip(&r.normals)
        .filter_map(|(p, n)| n.map(|n| (p.iter().sum::<f64>(), n)))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, n)| n)
}

/// Angle of a direction's projection onto the image plane, measured from
/// image right towards image up. `None` when it points along the view axis.
pub fn image_plane_angle(d: &Direction) -> Option<f64> {
    (d.x.hypot(d.y) > 1e-9).then(|| d.y.atan2(d.x))
}

/// Log-luminance false-color map: blue (dim) through green to red
/// (bright), normalized to the map's own range.
pub fn heatmap(map: &Image) -> Image {
    let lum = map.to_gray();
    let logs: Vec<f64> = lum.data().iter().map(|v| v.max(1e-6).log10()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = Image::new(map.width(), map.height(), 3);
    for (px, l) in out.data_mut().chunks_exact_mut(3).zip(&logs) {
        let t = (l - lo) / span;
        px[0] = (2.0 * t - 1.0).clamp(0.0, 1.0);
        px[1] = 1.0 - (2.0 * t - 1.0).abs();
        px[2] = (1.0 - 2.0 * t).clamp(0.0, 1.0);
    }
    out
}
