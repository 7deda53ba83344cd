use std::f64::consts::PI;

use rayon::prelude::*;

use super::CubeMap;
use crate::error::{Error, Result};
use crate::math::{Rgb, Vec3};

/// Equirectangular radiance image. Row 0 is the +y pole; the column angle
/// runs from +x toward +z.
#[derive(Debug, Clone, PartialEq)]
pub struct LatLongImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl LatLongImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width != 2 * height {
            return Err(Error::invalid(format!(
                "lat-long image must be 2h x h, got {width} x {height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::invalid("lat-long data length mismatch"));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(height: usize, f: impl Fn(&Vec3) -> Rgb) -> Self {
        let width = 2 * height;
        let mut data = Vec::with_capacity(width * height * 3);
        for row in 0..height {
            for col in 0..width {
                data.extend_from_slice(Self::pixel_direction_of(width, height, col, row).as_slice());
            }
        }
        for px in data.chunks_exact_mut(3) {
            let d = Vec3::new(px[0], px[1], px[2]);
            px.copy_from_slice(f(&d).as_slice());
        }
        Self { width, height, data }
    }

    pub fn constant(height: usize, c: Rgb) -> Self {
        Self::from_fn(height, |_| c)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn pixel(&self, col: usize, row: usize) -> Rgb {
        let i = 3 * (row * self.width + col);
        Rgb::new(self.data[i], self.data[i + 1], self.data[i + 2])
    }

    pub fn set_pixel(&mut self, col: usize, row: usize, v: Rgb) {
        let i = 3 * (row * self.width + col);
        self.data[i..i + 3].copy_from_slice(v.as_slice());
    }

    fn pixel_direction_of(width: usize, height: usize, col: usize, row: usize) -> Vec3 {
        let theta = PI * (row as f64 + 0.5) / height as f64;
        let phi = 2.0 * PI * (col as f64 + 0.5) / width as f64;
        Vec3::new(theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin())
    }

    /// Direction through the center of pixel `(col, row)`.
    pub fn pixel_direction(&self, col: usize, row: usize) -> Vec3 {
        Self::pixel_direction_of(self.width, self.height, col, row)
    }

    /// Bilinear lookup; wraps in longitude, clamps in latitude.
    pub fn sample(&self, dir: &Vec3) -> Rgb {
        let theta = dir.y.clamp(-1.0, 1.0).acos();
        let mut phi = dir.z.atan2(dir.x);
        if phi < 0.0 {
            phi += 2.0 * PI;
        }
        let x = phi / (2.0 * PI) * self.width as f64 - 0.5;
        let y = (theta / PI * self.height as f64 - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0f = x.floor();
        let fx = x - x0f;
        let w = self.width as i64;
        let c0 = (x0f as i64).rem_euclid(w) as usize;
        let c1 = (x0f as i64 + 1).rem_euclid(w) as usize;
        let r0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let r1 = (r0 + 1).min(self.height - 1);
        let fy = y - r0 as f64;
        self.pixel(c0, r0) * ((1.0 - fx) * (1.0 - fy))
            + self.pixel(c1, r0) * (fx * (1.0 - fy))
            + self.pixel(c0, r1) * ((1.0 - fx) * fy)
            + self.pixel(c1, r1) * (fx * fy)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

/// Cube map whose texels are bilinear samples of `img` at texel centers.
pub fn latlong_to_cube(img: &LatLongImage, face_size: usize) -> CubeMap {
    let proto = CubeMap::black(face_size);
    let data: Vec<f64> = (0..proto.texel_count())
        .into_par_iter()
        .flat_map_iter(|t| {
            let v = img.sample(&proto.texel_center(t));
            [v.x, v.y, v.z]
        })
        .collect();
    CubeMap::from_data(face_size, data).expect("sampled texels are finite")
}

/// Lat-long image of the given height sampled from `map`.
pub fn cube_to_latlong(map: &CubeMap, height: usize) -> LatLongImage {
    let width = 2 * height;
    let data: Vec<f64> = (0..width * height)
        .into_par_iter()
        .flat_map_iter(|i| {
            let d = LatLongImage::pixel_direction_of(width, height, i % width, i / width);
            let v = map.lookup(&d);
            [v.x, v.y, v.z]
        })
        .collect();
    LatLongImage { width, height, data }
}
