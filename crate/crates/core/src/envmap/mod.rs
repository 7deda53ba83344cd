//! Cube-map lighting: texel addressing, bilinear lookup, lat-long conversion
//! and prefiltering into diffuse / specular forms.
//!
//! Face order is `+x, -x, +y, -y, +z, -z`. Within a face, `u` runs left to
//! right and `v` top to bottom, with `a = 2u - 1`, `b = 2v - 1`:
//!
//! | face | direction (unnormalized) |
//! |------|--------------------------|
//! | +x   | `( 1, -b, -a)`           |
//! | -x   | `(-1, -b,  a)`           |
//! | +y   | `( a,  1,  b)`           |
//! | -y   | `( a, -1, -b)`           |
//! | +z   | `( a, -b,  1)`           |
//! | -z   | `(-a, -b, -1)`           |
//!
//! World space is right-handed with +y up.

mod latlong;
mod prefilter;

pub use latlong::{cube_to_latlong, latlong_to_cube, LatLongImage};
pub use prefilter::{
    default_levels, prefilter_diffuse, prefilter_specular, shared_prefilter, EnvPrefilter, PrefilterSettings,
    Bracket, PrefilteredEnv, PrefilteredGrad, SpecularGradient, SpecularLevel, SpecularOperator,
    DEFAULT_LEVEL_ROUGHNESS,
};

use crate::error::{Error, Result};
use crate::math::{Rgb, Vec3};

pub const FACE_COUNT: usize = 6;

/// Tolerance on `|dir| - 1` accepted by the checked lookup.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Face {
    PosX = 0,
    NegX = 1,
    PosY = 2,
    NegY = 3,
    PosZ = 4,
    NegZ = 5,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::PosX,
        Face::NegX,
        Face::PosY,
        Face::NegY,
        Face::PosZ,
        Face::NegZ,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Face> {
        Face::ALL.get(i).copied()
    }
}

/// World-space unit direction through face coordinates `(u, v)` in `[0, 1]`.
pub fn texel_direction(face: Face, u: f64, v: f64) -> Vec3 {
    let a = 2.0 * u - 1.0;
    let b = 2.0 * v - 1.0;
    let d = match face {
        Face::PosX => Vec3::new(1.0, -b, -a),
        Face::NegX => Vec3::new(-1.0, -b, a),
        Face::PosY => Vec3::new(a, 1.0, b),
        Face::NegY => Vec3::new(a, -1.0, -b),
        Face::PosZ => Vec3::new(a, -b, 1.0),
        Face::NegZ => Vec3::new(-a, -b, -1.0),
    };
    d.normalize()
}

/// Inverse of [`texel_direction`]: dominant-axis face and in-face `(u, v)`.
/// Ties between axes resolve in x, y, z order.
pub fn direction_to_texel(dir: &Vec3) -> (Face, f64, f64) {
    let (ax, ay, az) = (dir.x.abs(), dir.y.abs(), dir.z.abs());
    let (face, a, b) = if ax >= ay && ax >= az {
        if dir.x > 0.0 {
            (Face::PosX, -dir.z / ax, -dir.y / ax)
        } else {
            (Face::NegX, dir.z / ax, -dir.y / ax)
        }
    } else if ay >= az {
        if dir.y > 0.0 {
            (Face::PosY, dir.x / ay, dir.z / ay)
        } else {
            (Face::NegY, dir.x / ay, -dir.z / ay)
        }
    } else if dir.z > 0.0 {
        (Face::PosZ, dir.x / az, -dir.y / az)
    } else {
        (Face::NegZ, -dir.x / az, -dir.y / az)
    };
    (face, 0.5 * (a + 1.0), 0.5 * (b + 1.0))
}

fn face_area_term(x: f64, y: f64) -> f64 {
    (x * y).atan2((x * x + y * y + 1.0).sqrt())
}

/// Exact solid angle of texel `(col, row)` on a face of `size` texels.
pub fn texel_solid_angle(size: usize, col: usize, row: usize) -> f64 {
    let n = size as f64;
    let x0 = 2.0 * col as f64 / n - 1.0;
    let x1 = 2.0 * (col + 1) as f64 / n - 1.0;
    let y0 = 2.0 * row as f64 / n - 1.0;
    let y1 = 2.0 * (row + 1) as f64 / n - 1.0;
    face_area_term(x0, y0) - face_area_term(x0, y1) - face_area_term(x1, y0)
        + face_area_term(x1, y1)
}

/// Four bilinear taps `(texel index, weight)`; weights sum to one.
pub type Taps = [(usize, f64); 4];

/// Six square faces of linear RGB radiance.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeMap {
    face_size: usize,
    data: Vec<f64>,
}

impl CubeMap {
    pub fn constant(face_size: usize, value: Rgb) -> Self {
        assert!(face_size > 0, "face_size must be positive");
        let n = FACE_COUNT * face_size * face_size;
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            data.extend_from_slice(value.as_slice());
        }
        Self { face_size, data }
    }

    pub fn black(face_size: usize) -> Self {
        Self::constant(face_size, Rgb::zeros())
    }

    /// Fill each texel from its center direction.
    pub fn from_fn(face_size: usize, f: impl Fn(&Vec3) -> Rgb) -> Self {
        let mut map = Self::black(face_size);
        for t in 0..map.texel_count() {
            let d = map.texel_center(t);
            map.set_texel(t, f(&d));
        }
        map
    }

    pub fn from_data(face_size: usize, data: Vec<f64>) -> Result<Self> {
        if face_size == 0 {
            return Err(Error::invalid("face_size must be positive"));
        }
        if data.len() != FACE_COUNT * face_size * face_size * 3 {
            return Err(Error::invalid(format!(
                "cube map of face size {face_size} needs {} values, got {}",
                FACE_COUNT * face_size * face_size * 3,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("cube map texels must be finite and >= 0"));
        }
        Ok(Self { face_size, data })
    }

    pub fn face_size(&self) -> usize {
        self.face_size
    }

    pub fn texel_count(&self) -> usize {
        FACE_COUNT * self.face_size * self.face_size
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn texel_index(&self, face: Face, col: usize, row: usize) -> usize {
        (face.index() * self.face_size + row) * self.face_size + col
    }

    /// `(face, col, row)` of a flat texel index.
    pub fn texel_coords(&self, t: usize) -> (Face, usize, usize) {
        let n = self.face_size;
        let face = Face::from_index(t / (n * n)).expect("texel index out of range");
        let rem = t % (n * n);
        (face, rem % n, rem / n)
    }

    pub fn texel(&self, t: usize) -> Rgb {
        Rgb::new(self.data[3 * t], self.data[3 * t + 1], self.data[3 * t + 2])
    }

    pub fn set_texel(&mut self, t: usize, v: Rgb) {
        self.data[3 * t..3 * t + 3].copy_from_slice(v.as_slice());
    }

    pub fn texel_center(&self, t: usize) -> Vec3 {
        let (face, col, row) = self.texel_coords(t);
        let n = self.face_size as f64;
        texel_direction(face, (col as f64 + 0.5) / n, (row as f64 + 0.5) / n)
    }

    pub fn texel_solid_angle(&self, t: usize) -> f64 {
        let (_, col, row) = self.texel_coords(t);
        texel_solid_angle(self.face_size, col, row)
    }

    /// Solid angles of all texels in flat index order.
    pub fn solid_angles(&self) -> Vec<f64> {
        let n = self.face_size;
        let face: Vec<f64> = (0..n * n)
            .map(|i| texel_solid_angle(n, i % n, i / n))
            .collect();
        face.iter().copied().cycle().take(FACE_COUNT * n * n).collect()
    }

    /// Bilinear taps within the dominant face, clamped at face edges.
    pub fn taps(&self, dir: &Vec3) -> Taps {
        let (face, u, v) = direction_to_texel(dir);
        let n = self.face_size;
        let (c0, c1, fx) = axis_taps(u, n);
        let (r0, r1, fy) = axis_taps(v, n);
        [
            (self.texel_index(face, c0, r0), (1.0 - fx) * (1.0 - fy)),
            (self.texel_index(face, c1, r0), fx * (1.0 - fy)),
            (self.texel_index(face, c0, r1), (1.0 - fx) * fy),
            (self.texel_index(face, c1, r1), fx * fy),
        ]
    }

    pub fn gather(&self, taps: &Taps) -> Rgb {
        taps.iter()
            .fold(Rgb::zeros(), |acc, &(t, w)| acc + self.texel(t) * w)
    }

    /// Bilinear lookup without the unit-length check.
    pub fn lookup(&self, dir: &Vec3) -> Rgb {
        self.gather(&self.taps(dir))
    }

    /// Bilinear lookup of radiance arriving from `dir`.
    pub fn sample(&self, dir: &Vec3) -> Result<Rgb> {
        let len = dir.norm();
        if !len.is_finite() || (len - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::invalid(format!(
                "sample direction must be unit length, got |dir| = {len}"
            )));
        }
        Ok(self.lookup(dir))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            face_size: self.face_size,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Resample onto a cube of a different face size.
    pub fn resampled(&self, face_size: usize) -> Self {
        if face_size == self.face_size {
            return self.clone();
        }
        CubeMap::from_fn(face_size, |d| self.lookup(d))
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Positivity projection applied after optimizer steps.
    pub fn project_nonnegative(&mut self) {
        for v in &mut self.data {
            if !(*v > 0.0) {
                *v = 0.0;
            }
        }
    }

    /// Projection onto `[0, 1]` for unit-bounded lighting.
    pub fn project_unit(&mut self) {
        for v in &mut self.data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
    }

    /// Solid-angle-weighted radiance sum, `sum L dw`.
    pub fn radiant_sum(&self) -> Rgb {
        let w = self.solid_angles();
        (0..self.texel_count()).fold(Rgb::zeros(), |acc, t| acc + self.texel(t) * w[t])
    }
}

fn axis_taps(u: f64, n: usize) -> (usize, usize, f64) {
    if n == 1 {
        return (0, 0, 0.0);
    }
    let s = (u * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
    let i0 = (s.floor() as usize).min(n - 2);
    (i0, i0 + 1, s - i0 as f64)
}

/// Total solid angle covered by a cube of the given face size; 4π up to
/// rounding.
pub fn total_solid_angle(face_size: usize) -> f64 {
    let n = face_size;
    let face: f64 = (0..n * n)
        .map(|i| texel_solid_angle(n, i % n, i / n))
        .sum();
    face * FACE_COUNT as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::gray;

    const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

    #[test]
    fn face_centers_are_axes() {
        let cases = [
            (Face::PosX, Vec3::x()),
            (Face::NegX, -Vec3::x()),
            (Face::PosY, Vec3::y()),
            (Face::NegY, -Vec3::y()),
            (Face::PosZ, Vec3::z()),
            (Face::NegZ, -Vec3::z()),
        ];
        for (face, axis) in cases {
            let d = texel_direction(face, 0.5, 0.5);
            assert!((d - axis).norm() < 1e-15, "{face:?}: {d:?}");
        }
    }

    #[test]
    fn directions_are_unit() {
        for face in Face::ALL {
            for i in 0..16 {
                for j in 0..16 {
                    let d = texel_direction(face, i as f64 / 16.0, j as f64 / 16.0);
                    assert!((d.norm() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn round_trip_grid() {
        // 16x16 texel-center grid on every face, plus points just inside the
        // left edge.
        for face in Face::ALL {
            for i in 0..16 {
                for j in 0..16 {
                    let (u, v) = ((i as f64 + 0.5) / 16.0, (j as f64 + 0.5) / 16.0);
                    let (f2, u2, v2) = direction_to_texel(&texel_direction(face, u, v));
                    assert_eq!(f2, face);
                    assert!((u - u2).abs() < 1e-12 && (v - v2).abs() < 1e-12);
                }
            }
            let d = texel_direction(face, 1e-9, 0.5);
            let (f2, u2, _) = direction_to_texel(&d);
            assert_eq!(f2, face);
            assert!(u2 < 1.0 / 32.0);
        }
    }

    #[test]
    fn edge_of_pos_x_lies_toward_pos_z() {
        // u -> 0 on +x approaches the +x/+z edge.
        let d = texel_direction(Face::PosX, 0.0, 0.5);
        assert!((d - Vec3::new(1.0, 0.0, 1.0).normalize()).norm() < 1e-12);
    }

    #[test]
    fn solid_angles_partition_sphere() {
        for n in [1, 2, 8, 16, 33, 64] {
            let total = total_solid_angle(n);
            assert!(((total - FOUR_PI) / FOUR_PI).abs() < 1e-12, "n={n} total={total}");
        }
    }

    #[test]
    fn constant_map_samples_constant() {
        let c = Rgb::new(0.2, 1.5, 3.0);
        let m = CubeMap::constant(8, c);
        for d in [Vec3::x(), Vec3::new(0.3, -0.2, 0.9).normalize(), -Vec3::y()] {
            assert!((m.sample(&d).unwrap() - c).norm() < 1e-14);
        }
    }

    #[test]
    fn texel_center_sample_is_identity() {
        let m = CubeMap::from_fn(8, |d| Rgb::new(d.x.abs(), d.y * d.y, 1.0 + d.z));
        for t in 0..m.texel_count() {
            let s = m.sample(&m.texel_center(t)).unwrap();
            assert!((s - m.texel(t)).norm() < 1e-12, "texel {t}");
        }
    }

    #[test]
    fn bilinear_weights_single_hot() {
        let mut m = CubeMap::black(8);
        let hot = m.texel_index(Face::PosZ, 3, 4);
        m.set_texel(hot, gray(1.0));
        // Quarter texel right and quarter texel down from the hot center.
        let n = 8.0;
        let d = texel_direction(Face::PosZ, (3.75) / n, (4.75) / n);
        let v = m.sample(&d).unwrap();
        let (_, u, vv) = direction_to_texel(&d);
        let fx = u * n - 0.5 - 3.0;
        let fy = vv * n - 0.5 - 4.0;
        assert!((v.x - (1.0 - fx) * (1.0 - fy)).abs() < 1e-12);
        let w: f64 = m.taps(&d).iter().map(|t| t.1).sum();
        assert!((w - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_unit_direction_is_rejected() {
        let m = CubeMap::constant(4, gray(1.0));
        assert!(m.sample(&Vec3::new(1.0, 1.0, 0.0)).is_err());
        assert!(m.sample(&Vec3::new(1.0 + 5e-7, 0.0, 0.0)).is_ok());
    }

    #[test]
    fn projection_clears_negatives() {
        let mut m = CubeMap::constant(4, gray(0.5));
        m.data_mut()[5] = -2.0;
        m.data_mut()[7] = f64::NAN;
        m.project_nonnegative();
        assert!(m.min_value() >= 0.0);
    }
}
