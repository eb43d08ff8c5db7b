//! Procedural indoor panoramas with exact light annotations.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pixel_center_dir, CropSpec, Direction, DynamicRange, Panorama};
use crate::image::{percentile, BinaryMask, Image};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightClass {
    /// Spotlights and lamps.
    SmallLight,
    /// Windows and strong reflections.
    LargeLight,
}

impl LightClass {
    pub fn code(self) -> u8 {
        match self {
            LightClass::SmallLight => 1,
            LightClass::LargeLight => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub width: usize,
    pub lights_min: usize,
    pub lights_max: usize,
    /// Probability that a light is a small emitter rather than a window.
    pub small_fraction: f64,
    pub confounders_min: usize,
    pub confounders_max: usize,
    pub ambient: f64,
    /// Emitter intensity range, in multiples of the ambient level.
    pub intensity_min: f64,
    pub intensity_max: f64,
    /// Small emitter angular radius range, degrees.
    pub disc_radius_deg: (f64, f64),
    pub disc_elevation_deg: (f64, f64),
    /// Window width and height ranges, degrees.
    pub window_width_deg: (f64, f64),
    pub window_height_deg: (f64, f64),
    pub window_elevation_deg: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 512,
            lights_min: 1,
            lights_max: 4,
            small_fraction: 0.5,
            confounders_min: 1,
            confounders_max: 3,
            ambient: 1.0,
            intensity_min: 10.0,
            intensity_max: 1000.0,
            disc_radius_deg: (7.0, 14.0),
            disc_elevation_deg: (20.0, 70.0),
            window_width_deg: (25.0, 50.0),
            window_height_deg: (20.0, 40.0),
            window_elevation_deg: (0.0, 30.0),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.width % 2 != 0 {
            return Err(Error::domain("synthetic width must be even and at least 8"));
        }
        if self.lights_min > self.lights_max || self.confounders_min > self.confounders_max {
            return Err(Error::domain("count ranges must satisfy min <= max"));
        }
        if !(self.ambient > 0.0) || !(self.intensity_min > 0.0) || self.intensity_min > self.intensity_max {
            return Err(Error::domain("ambient and intensity range must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthLight {
    pub class: LightClass,
    /// Center direction, radians.
    pub azimuth: f64,
    pub elevation: f64,
    /// Angular extent, radians. Discs use `width / 2` as radius.
    pub width: f64,
    pub height: f64,
    /// Linear radiance of the emitter (max channel).
    pub intensity: f64,
    pub color: [f64; 3],
}

impl SynthLight {
    pub fn direction(&self) -> Direction {
        Direction::from_angles(self.azimuth, self.elevation)
    }

    fn contains(&self, d: &Direction) -> bool {
        match self.class {
            LightClass::SmallLight => d.angle_to(&self.direction()) < self.width / 2.0,
            LightClass::LargeLight => {
                let daz = wrap_angle(d.azimuth() - self.azimuth);
                let del = d.elevation() - self.elevation;
                daz.abs() < self.width / 2.0 && del.abs() < self.height / 2.0
            }
        }
    }

    /// Angular distance from the emitter outline, zero inside.
    fn distance(&self, d: &Direction) -> f64 {
        match self.class {
            LightClass::SmallLight => (d.angle_to(&self.direction()) - self.width / 2.0).max(0.0),
            LightClass::LargeLight => {
                let daz = (wrap_angle(d.azimuth() - self.azimuth).abs() - self.width / 2.0).max(0.0);
                let del = ((d.elevation() - self.elevation).abs() - self.height / 2.0).max(0.0);
                daz.hypot(del)
            }
        }
    }
}

/// A procedural room and its annotations.
#[derive(Clone, Debug)]
pub struct SynthScene {
    pub pano: Panorama,
    pub mask: BinaryMask,
    /// Per-pixel class code: 0 background, then [`LightClass::code`].
    pub class_map: Vec<u8>,
    pub lights: Vec<SynthLight>,
    pub floor_elevation: f64,
    pub ceiling_elevation: f64,
    pub ambient: f64,
}

impl SynthScene {
    pub fn annotation(&self) -> SceneAnnotation {
        SceneAnnotation {
            lights: self.lights.clone(),
            floor_elevation: self.floor_elevation,
            ceiling_elevation: self.ceiling_elevation,
            ambient: self.ambient,
            components: component_classes(&self.mask, &self.class_map),
        }
    }

    /// Mask of one class.
    pub fn class_mask(&self, class: LightClass) -> BinaryMask {
        class_mask(&self.class_map, self.mask.width(), self.mask.height(), class)
    }
}

pub(crate) fn class_mask(map: &[u8], w: usize, h: usize, class: LightClass) -> BinaryMask {
    let code = class.code();
    BinaryMask::from_fn(w, h, |x, y| map[y * w + x] == code)
}

/// One connected component of the annotation mask and its class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentClass {
    pub label: u32,
    pub class: LightClass,
    pub pixels: usize,
}

/// JSON sidecar written next to a synthetic panorama.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneAnnotation {
    pub lights: Vec<SynthLight>,
    pub floor_elevation: f64,
    pub ceiling_elevation: f64,
    pub ambient: f64,
    pub components: Vec<ComponentClass>,
}

impl SceneAnnotation {
    /// Rebuilds the per-pixel class map from a mask and this sidecar.
    pub fn class_map(&self, mask: &BinaryMask) -> Vec<u8> {
        let comps = mask.components(true, true);
        let mut lookup = vec![0u8; comps.count + 1];
        for c in &self.components {
            if (c.label as usize) <= comps.count {
                lookup[c.label as usize] = c.class.code();
            }
        }
        comps.labels.iter().map(|&l| lookup[l as usize]).collect()
    }
}

fn component_classes(mask: &BinaryMask, class_map: &[u8]) -> Vec<ComponentClass> {
    let comps = mask.components(true, true);
    let mut votes = vec![[0usize; 3]; comps.count + 1];
    for (&l, &c) in comps.labels.iter().zip(class_map) {
        votes[l as usize][c as usize] += 1;
    }
    (1..=comps.count)
        .map(|l| {
            let v = votes[l];
            ComponentClass {
                label: l as u32,
                class: if v[2] > v[1] {
                    LightClass::LargeLight
                } else {
                    LightClass::SmallLight
                },
                pixels: v[1] + v[2],
            }
        })
        .collect()
}

fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(TAU) - PI
}

fn uniform<R: Rng>(rng: &mut R, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

struct Confounder {
    azimuth: f64,
    elevation: f64,
    width: f64,
    height: f64,
    level: f64,
    stripe: f64,
}

struct Picture {
    azimuth: f64,
    elevation: f64,
    width: f64,
    height: f64,
    level: f64,
}

/// Generates a room panorama (HDR) with its exact light mask.
pub fn gen_synthetic_pano<R: Rng>(rng: &mut R, cfg: &SynthConfig) -> Result<SynthScene> {
    cfg.validate()?;
    let w = cfg.width;
    let h = w / 2;
    let a = cfg.ambient;
    let tint = [
        rng.random_range(0.85..1.15),
        rng.random_range(0.85..1.15),
        rng.random_range(0.85..1.15),
    ];
    let floor = -rng.random_range(20.0f64..35.0).to_radians();
    let ceiling = rng.random_range(35.0f64..50.0).to_radians();
    let phase = [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)];
    let freq = rng.random_range(1..4) as f64;

    let n_lights = rng.random_range(cfg.lights_min..=cfg.lights_max);
    let mut lights: Vec<SynthLight> = Vec::new();
    for _ in 0..n_lights {
        for _attempt in 0..64 {
            let class = if rng.random_bool(cfg.small_fraction.clamp(0.0, 1.0)) {
                LightClass::SmallLight
            } else {
                LightClass::LargeLight
            };
            let (width, height, elevation) = match class {
                LightClass::SmallLight => {
                    let r = uniform(rng, cfg.disc_radius_deg).to_radians();
                    (2.0 * r, 2.0 * r, uniform(rng, cfg.disc_elevation_deg).to_radians())
                }
                LightClass::LargeLight => (
                    uniform(rng, cfg.window_width_deg).to_radians(),
                    uniform(rng, cfg.window_height_deg).to_radians(),
                    uniform(rng, cfg.window_elevation_deg).to_radians(),
                ),
            };
            let azimuth = rng.random_range(-PI..PI);
            let log_i = uniform(rng, (cfg.intensity_min.ln(), cfg.intensity_max.ln()));
            let color = [
                rng.random_range(0.85..=1.0),
                rng.random_range(0.85..=1.0),
                rng.random_range(0.85..=1.0),
            ];
            let cand = SynthLight {
                class,
                azimuth,
                elevation,
                width,
                height,
                intensity: log_i.exp() * a,
                color,
            };
            let clear = lights.iter().all(|l| {
                let reach = (l.width.max(l.height) + cand.width.max(cand.height)) / 2.0;
                l.direction().angle_to(&cand.direction()) > reach + 10f64.to_radians()
            });
            if clear {
                lights.push(cand);
                break;
            }
        }
    }

    let n_conf = rng.random_range(cfg.confounders_min..=cfg.confounders_max);
    let mut confounders = Vec::new();
    for _ in 0..n_conf {
        confounders.push(Confounder {
            azimuth: rng.random_range(-PI..PI),
            elevation: rng.random_range(-40.0f64..0.0).to_radians(),
            width: rng.random_range(15.0f64..40.0).to_radians(),
            height: rng.random_range(10.0f64..25.0).to_radians(),
            level: rng.random_range(1.2..3.0) * a,
            stripe: rng.random_range(2.0f64..5.0).to_radians(),
        });
    }
    let n_pics = rng.random_range(0..3);
    let pictures: Vec<Picture> = (0..n_pics)
        .map(|_| Picture {
            azimuth: rng.random_range(-PI..PI),
            elevation: rng.random_range(-5.0f64..20.0).to_radians(),
            width: rng.random_range(10.0f64..30.0).to_radians(),
            height: rng.random_range(8.0f64..20.0).to_radians(),
            level: rng.random_range(0.15..0.5) * a,
        })
        .collect();

    let mut img = Image::new(w, h, 3);
    let mut mask = BinaryMask::new(w, h);
    let mut class_map = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let d = pixel_center_dir(x, y, w, h);
            let az = d.azimuth();
            let el = d.elevation();
            let mut level = if el < floor {
                0.45 * a * (1.0 + 0.1 * (3.0 * az + phase[1]).sin())
            } else if el > ceiling {
                0.95 * a * (1.0 - 0.1 * (el - ceiling) / (FRAC_PI_2 - ceiling))
            } else {
                a * (0.75 + 0.12 * (freq * az + phase[0]).sin() + 0.08 * (2.0 * az + phase[1]).cos())
                    * (1.0 + 0.1 * el / FRAC_PI_2)
            };
            for p in &pictures {
                if wrap_angle(az - p.azimuth).abs() < p.width / 2.0
                    && (el - p.elevation).abs() < p.height / 2.0
                {
                    level = p.level;
                }
            }
            for c in &confounders {
                let daz = wrap_angle(az - c.azimuth);
                if daz.abs() < c.width / 2.0 && (el - c.elevation).abs() < c.height / 2.0 {
                    let on = ((daz + c.width / 2.0) / c.stripe).floor() as i64 % 2 == 0;
                    level = if on { c.level } else { 0.6 * a };
                }
            }
            let mut rgb = [level * tint[0], level * tint[1], level * tint[2]];
            let mut emitter = None;
            let mut halo = 0.0f64;
            for l in &lights {
                if l.contains(&d) {
                    emitter = Some(l);
                    break;
                }
                let dist = l.distance(&d);
                let reach = 0.5 * l.width.min(l.height);
                halo = halo.max(0.15 * a * (-(dist / reach).powi(2) * 4.0).exp());
            }
            if let Some(l) = emitter {
                rgb = [l.intensity * l.color[0], l.intensity * l.color[1], l.intensity * l.color[2]];
                let m = rgb[0].max(rgb[1]).max(rgb[2]);
                for v in &mut rgb {
                    *v *= l.intensity / m;
                }
                mask.set(x, y, true);
                class_map[y * w + x] = l.class.code();
            } else {
                for v in &mut rgb {
                    *v += halo;
                }
            }
            img.pixel_mut(x, y).copy_from_slice(&rgb);
        }
    }

    // keep every emitter at least 10x the 99th percentile of the rest
    let mut rest: Vec<f64> = (0..w * h)
        .filter(|&i| !mask.data()[i])
        .map(|i| img.data()[3 * i..3 * i + 3].iter().copied().fold(0.0, f64::max))
        .collect();
    if !rest.is_empty() && !mask.is_empty() {
        let floor_level = 10.0 * percentile(&mut rest, 0.99);
        for l in &mut lights {
            if l.intensity < floor_level {
                let k = floor_level / l.intensity;
                l.intensity = floor_level;
                for i in 0..w * h {
                    if mask.data()[i] && emitter_index(&class_map, i, l, w, h) {
                        for v in &mut img.data_mut()[3 * i..3 * i + 3] {
                            *v *= k;
                        }
                    }
                }
            }
        }
    }

    Ok(SynthScene {
        pano: Panorama::new(img, DynamicRange::Hdr)?,
        mask,
        class_map,
        lights,
        floor_elevation: floor,
        ceiling_elevation: ceiling,
        ambient: a,
    })
}

fn emitter_index(class_map: &[u8], i: usize, l: &SynthLight, w: usize, h: usize) -> bool {
    if class_map[i] != l.class.code() {
        return false;
    }
    let d = pixel_center_dir(i % w, i / w, w, h);
    l.contains(&d)
}

/// Surface normals seen by a crop camera inside a synthetic room: floor
/// below `floor_elevation`, ceiling above `ceiling_elevation`, walls
/// facing the camera in between.
pub fn scene_normals(floor_elevation: f64, ceiling_elevation: f64, spec: &CropSpec) -> Image {
    let mut out = Image::new(spec.width, spec.height, 3);
    for y in 0..spec.height {
        for x in 0..spec.width {
            let d = spec.ray(x as f64 + 0.5, y as f64 + 0.5);
            let el = d.elevation();
            let n = if el < floor_elevation {
                [0.0, 1.0, 0.0]
            } else if el > ceiling_elevation {
                [0.0, -1.0, 0.0]
            } else {
                let r = d.x.hypot(d.z).max(1e-12);
                [-d.x / r, 0.0, -d.z / r]
            };
            out.pixel_mut(x, y).copy_from_slice(&n);
        }
    }
    out
}
