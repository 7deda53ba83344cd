//! File formats: Radiance HDR, PNG, float dumps, scene and camera files,
//! key-value configs.

pub mod camera;
pub mod config;
pub mod dump;
pub mod hdr;
pub mod lut;
pub mod png;
pub mod scene;

pub use camera::{format_cameras, parse_cameras, read_cameras, write_cameras};
pub use config::{parse_key_values, read_key_values};
pub use dump::FloatDump;
pub use hdr::{read_hdr, write_hdr, HdrError};
pub use lut::{lut_from_bytes, lut_to_bytes, read_lut, write_lut};
pub use scene::{read_scene, scene_from_bytes, scene_to_bytes, write_scene};
pub use self::png::{read_png, write_png};
