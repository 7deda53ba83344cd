//! Column-layout scene file.
//!
//! Byte layout (all little-endian):
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 8 | magic `RCAPSCN1` |
//! | 8 | 4 | `u32` format version (1) |
//! | 12 | 4 | `u32` point count `N` |
//! | 16 | `19 * 4N` | 19 columns of `N` f32 each |
//!
//! Columns in order: `position.{x,y,z}`, `scale.{x,y,z}`,
//! `rotation.{w,x,y,z}`, `opacity`, `basecolor.{r,g,b}`,
//! `specular_tint.{r,g,b}`, `roughness`, `metallic`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{Rgb, Vec3};
use crate::shading::MaterialParams;
use crate::splat::GaussianPoint;

pub const SCENE_MAGIC: &[u8; 8] = b"RCAPSCN1";
pub const SCENE_VERSION: u32 = 1;
pub const SCENE_COLUMNS: usize = 19;
const HEADER: usize = 16;

fn row(p: &GaussianPoint) -> [f64; SCENE_COLUMNS] {
    let q = p.rotation.quaternion();
    let m = &p.material;
    [
        p.position.x,
        p.position.y,
        p.position.z,
        p.scale.x,
        p.scale.y,
        p.scale.z,
        q.w,
        q.i,
        q.j,
        q.k,
        p.opacity,
        m.basecolor.x,
        m.basecolor.y,
        m.basecolor.z,
        m.specular_tint.x,
        m.specular_tint.y,
        m.specular_tint.z,
        m.roughness,
        m.metallic,
    ]
}

pub fn scene_to_bytes(scene: &[GaussianPoint]) -> Vec<u8> {
    let n = scene.len();
    let rows: Vec<_> = scene.iter().map(row).collect();
    let mut out = Vec::with_capacity(HEADER + 4 * SCENE_COLUMNS * n);
    out.extend_from_slice(SCENE_MAGIC);
    out.extend_from_slice(&SCENE_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for c in 0..SCENE_COLUMNS {
        for r in &rows {
            out.extend_from_slice(&(r[c] as f32).to_le_bytes());
        }
    }
    out
}

pub fn scene_from_bytes(buf: &[u8]) -> std::result::Result<Vec<GaussianPoint>, String> {
    if buf.len() < HEADER || &buf[..8] != SCENE_MAGIC {
        return Err("bad magic at byte 0".into());
    }
    let u32_at = |o: usize| u32::from_le_bytes([buf[o], buf[o + 1], buf[o + 2], buf[o + 3]]);
    let version = u32_at(8);
    if version != SCENE_VERSION {
        return Err(format!("unsupported version {version} at byte 8"));
    }
    let n = u32_at(12) as usize;
    let expected = (n as u64) * 4 * (SCENE_COLUMNS as u64);
    if (buf.len() - HEADER) as u64 != expected {
        return Err(format!("payload is {} bytes, expected {expected} for {n} points", buf.len() - HEADER));
    }
    let col = |c: usize, i: usize| -> f64 {
        let o = HEADER + 4 * (c * n + i);
        f32::from_le_bytes([buf[o], buf[o + 1], buf[o + 2], buf[o + 3]]) as f64
    };
    (0..n)
        .map(|i| {
            let v = |c| col(c, i);
            if let Some(c) = (0..SCENE_COLUMNS).find(|&c| !v(c).is_finite()) {
                return Err(format!("point {i}: non-finite value in column {c} (byte {})", HEADER + 4 * (c * n + i)));
            }
            let q = [v(6), v(7), v(8), v(9)];
            let qn = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            let material = MaterialParams {
                basecolor: Rgb::new(v(11), v(12), v(13)),
                specular_tint: Rgb::new(v(14), v(15), v(16)),
                roughness: v(17),
                metallic: v(18),
            };
            if !material.is_valid() {
                return Err(format!("point {i}: material out of range"));
            }
            GaussianPoint::new(
                Vec3::new(v(0), v(1), v(2)),
                Vec3::new(v(3), v(4), v(5)),
                if qn > 0.0 { q.map(|x| x / qn) } else { q },
                v(10),
                material,
            )
            .map_err(|e| format!("point {i}: {e}"))
        })
        .collect()
}

pub fn write_scene(scene: &[GaussianPoint], path: &Path) -> Result<()> {
    fs::write(path, scene_to_bytes(scene)).map_err(Error::at(path))?;
    Ok(())
}

pub fn read_scene(path: &Path) -> Result<Vec<GaussianPoint>> {
    let buf = fs::read(path).map_err(Error::at(path))?;
    scene_from_bytes(&buf).map_err(|msg| Error::Format { path: path.to_path_buf(), msg })
}
