//! Environment-map assembly from network outputs, file I/O and previews.

mod compose;
mod pfm;
mod png;
mod render;
mod rgbe;

pub use compose::{compose_hdr, compose_ldr, hdr_base, ComposeParams, HdrComposeParams, HdrComposition};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm};
pub use png::{read_png, write_png};
pub use render::{
    brightest_normal, heatmap, image_plane_angle, render_diffuse_sphere, render_diffuse_sphere_linear, SphereRender,
};
pub use rgbe::{decode_hdr, encode_hdr, read_hdr, rgbe_decode, rgbe_encode, write_hdr};
