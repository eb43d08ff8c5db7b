//! Indoor illumination estimation from a single limited field of view photo.
//!
//! The crate covers the full pipeline: equirectangular geometry, the
//! recentering warp, an LDR light-source detector, cosine-filtered losses,
//! a compact two-head network with its own reverse-mode gradients, and HDR
//! environment-map composition with diffuse previews.

pub mod cli;
pub mod dataset;
pub mod detector;
pub mod envmap;
pub mod error;
pub mod geometry;
pub mod image;
pub mod loss;
pub mod model;
pub mod rng;
pub mod warp;

pub use error::{Error, Result};
pub use geometry::{CropSpec, Direction, DynamicRange, Panorama, SolidAngleMap};
pub use image::{BinaryMask, Image};
