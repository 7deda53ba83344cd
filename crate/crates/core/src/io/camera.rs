//! Plain-text camera list: one frame per line,
//! `width height fov_x m00 m01 ... m33`, where `m` is the row-major
//! camera-to-world matrix in OpenGL axes (`-z` forward, `+y` up) and
//! `fov_x` is in radians. `#` starts a comment.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Matrix4;

use crate::error::{Error, Result};
use crate::splat::Camera;

pub fn parse_cameras(text: &str, origin: &Path) -> Result<Vec<Camera>> {
    let fail = |line: usize, msg: String| Error::Format { path: origin.to_path_buf(), msg: format!("line {line}: {msg}") };
    let mut cams = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 19 {
            return Err(fail(i + 1, format!("expected 19 fields, found {}", tok.len())));
        }
        let size = |s: &str| s.parse::<usize>().map_err(|_| fail(i + 1, format!("bad image size '{s}'")));
        let (w, h) = (size(tok[0])?, size(tok[1])?);
        let nums = tok[2..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| fail(i + 1, format!("bad number '{s}'"))))
            .collect::<Result<Vec<_>>>()?;
        let m = Matrix4::from_row_slice(&nums[1..]);
        cams.push(Camera::from_c2w_gl(&m, nums[0], w, h).map_err(|e| fail(i + 1, e.to_string()))?);
    }
    if cams.is_empty() {
        return Err(Error::Format { path: origin.to_path_buf(), msg: "no cameras".into() });
    }
    Ok(cams)
}

pub fn format_cameras(cams: &[Camera]) -> String {
    let mut s = String::from("# width height fov_x c2w(row-major, OpenGL axes)\n");
    for c in cams {
        let m = c.to_c2w_gl();
        let _ = write!(s, "{} {} {:?}", c.width, c.height, c.fov_x());
        for r in 0..4 {
            for k in 0..4 {
                let _ = write!(s, " {:?}", m[(r, k)]);
            }
        }
        s.push('\n');
    }
    s
}

pub fn read_cameras(path: &Path) -> Result<Vec<Camera>> {
    parse_cameras(&fs::read_to_string(path).map_err(Error::at(path))?, path)
}

pub fn write_cameras(cams: &[Camera], path: &Path) -> Result<()> {
    fs::write(path, format_cameras(cams)).map_err(Error::at(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;

    #[test]
    fn round_trip() {
        let cams = vec![
            Camera::look_at(Vec3::new(0.0, 1.0, 3.0), Vec3::zeros(), Vec3::y(), 0.8, 20, 16).unwrap(),
            Camera::look_at(Vec3::new(-2.0, 0.5, -1.0), Vec3::new(0.1, 0.0, 0.0), Vec3::y(), 1.1, 8, 8).unwrap(),
        ];
        let back = parse_cameras(&format_cameras(&cams), Path::new("cams")).unwrap();
        for (a, b) in cams.iter().zip(&back) {
            assert_eq!((a.width, a.height), (b.width, b.height));
            assert!((a.rotation - b.rotation).norm() < 1e-12);
            assert!((a.translation - b.translation).norm() < 1e-12);
            assert!((a.fx - b.fx).abs() < 1e-9);
        }
    }

    #[test]
    fn malformed_lines_report_position() {
        let err = parse_cameras("# c\n4 4 1.0 1 0 0\n", Path::new("c")).unwrap_err();
        assert!(err.to_string().contains("line 2"));
        assert!(parse_cameras("# only comments\n", Path::new("c")).is_err());
    }
}
