//! Gaussian point primitives, pinhole cameras and screen-space projection.
//!
//! Cameras use computer-vision axes: `+x` right, `+y` down, `+z` forward.
//! Pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`.

mod raster;

pub use raster::{
    depth_to_normal, loss_depth_normal, render, render_with_model, shade_points, BlendPlan,
    PointShading, RenderedImage, ALPHA_VALID, TRANSMITTANCE_EPS,
};
pub(crate) use raster::depth_normal_from_plan;

use nalgebra::{Matrix2, Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector2};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::shading::MaterialParams;

/// Anti-aliasing variance added to every screen-space covariance (pixels^2).
pub const SCREEN_BLUR: f64 = 0.3;
pub const MAX_CONDITION: f64 = 1e12;
pub const NEAR_PLANE: f64 = 1e-2;
/// Footprint truncation in squared Mahalanobis units (3 sigma).
pub const CUTOFF_SQ: f64 = 9.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPoint {
    pub position: Vec3,
    /// Per-axis standard deviation in the local frame.
    pub scale: Vec3,
    pub rotation: UnitQuaternion<f64>,
    pub opacity: f64,
    pub material: MaterialParams,
}

impl GaussianPoint {
    /// Validating constructor; `rotation` is `(w, x, y, z)` and must be unit
    /// length within 1e-6.
    pub fn new(
        position: Vec3,
        scale: Vec3,
        rotation: [f64; 4],
        opacity: f64,
        material: MaterialParams,
    ) -> Result<Self> {
        let q = Quaternion::new(rotation[0], rotation[1], rotation[2], rotation[3]);
        if (q.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("quaternion norm {} is not 1", q.norm())));
        }
        if scale.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid(format!("scale {scale:?} must be positive")));
        }
        if !(opacity > 0.0 && opacity <= 1.0) {
            return Err(Error::invalid(format!("opacity {opacity} outside (0, 1]")));
        }
        if position.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("position {position:?}")));
        }
        Ok(Self { position, scale, rotation: UnitQuaternion::new_normalize(q), opacity, material })
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// `R diag(scale^2) R^T`.
    pub fn covariance(&self) -> Matrix3<f64> {
        let r = self.rotation_matrix();
        r * Matrix3::from_diagonal(&self.scale.component_mul(&self.scale)) * r.transpose()
    }

    pub fn condition_number(&self) -> f64 {
        let (lo, hi) = (self.scale.min(), self.scale.max());
        (hi / lo).powi(2)
    }
}

/// `exp(-d^2 / 2)` with `d` the Mahalanobis distance of `x` from the mean.
pub fn gaussian_weight(x: &Vec3, p: &GaussianPoint) -> Result<f64> {
    let cond = p.condition_number();
    if !(cond <= MAX_CONDITION) {
        return Err(Error::DegenerateCovariance(cond));
    }
    let r = p.rotation_matrix();
    let local = r.transpose() * (x - p.position);
    let d2 = local.component_div(&p.scale).norm_squared();
    Ok((-0.5 * d2).exp())
}

/// Index of the smallest scale; ties go to the lowest axis.
pub fn shortest_axis(scale: &Vec3) -> usize {
    let mut k = 0;
    for i in 1..3 {
        if scale[i] < scale[k] {
            k = i;
        }
    }
    k
}

/// Minimal-scale principal axis, oriented so `n . (-view_dir) > 0`.
/// `view_dir` points from the camera toward the point.
pub fn shortest_axis_normal(p: &GaussianPoint, view_dir: &Vec3) -> Vec3 {
    let axis: Vec3 = p.rotation_matrix().column(shortest_axis(&p.scale)).into();
    if axis.dot(view_dir) > 0.0 {
        -axis
    } else {
        axis
    }
}

/// Pinhole camera. `rotation`/`translation` map world to camera space.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vec3,
        (fx, fy): (f64, f64),
        (cx, cy): (f64, f64),
        (width, height): (usize, usize),
    ) -> Result<Self> {
        let err = (rotation * rotation.transpose() - Matrix3::identity()).abs().max();
        if err > 1e-6 || rotation.determinant() < 0.0 {
            return Err(Error::invalid(format!("camera rotation is not orthonormal (error {err:.2e})")));
        }
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("image size must be positive"));
        }
        Ok(Self { rotation, translation, fx, fy, cx, cy, width, height })
    }

    /// Camera at `eye` looking at `target` with horizontal field of view
    /// `fov_x` (radians) and a centered principal point.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_x: f64, width: usize, height: usize) -> Result<Self> {
        let z = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("eye and target coincide"))?;
        let x = z.cross(&up).try_normalize(1e-9).ok_or_else(|| Error::invalid("up is parallel to view"))?;
        let y = z.cross(&x);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let f = 0.5 * width as f64 / (0.5 * fov_x).tan();
        Self::new(r, -(r * eye), (f, f), (0.5 * width as f64, 0.5 * height as f64), (width, height))
    }

    /// From a camera-to-world matrix with graphics axes (`-z` forward, `+y`
    /// up), as used by common synthetic datasets.
    pub fn from_c2w_gl(c2w: &Matrix4<f64>, fov_x: f64, width: usize, height: usize) -> Result<Self> {
        let r_gl = c2w.fixed_view::<3, 3>(0, 0).into_owned();
        let flip = Matrix3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0));
        let r_c2w = r_gl * flip;
        let eye = Vec3::new(c2w[(0, 3)], c2w[(1, 3)], c2w[(2, 3)]);
        let r = r_c2w.transpose();
        let f = 0.5 * width as f64 / (0.5 * fov_x).tan();
        Self::new(r, -(r * eye), (f, f), (0.5 * width as f64, 0.5 * height as f64), (width, height))
    }

    pub fn to_c2w_gl(&self) -> Matrix4<f64> {
        let flip = Matrix3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0));
        let r = self.rotation.transpose() * flip;
        let c = self.center();
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        m[(0, 3)] = c.x;
        m[(1, 3)] = c.y;
        m[(2, 3)] = c.z;
        m
    }

    pub fn fov_x(&self) -> f64 {
        2.0 * (0.5 * self.width as f64 / self.fx).atan()
    }

    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn to_camera(&self, x: &Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Camera-space point at pixel coordinate `(u, v)` with depth `z`.
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx * z, (v - self.cy) / self.fy * z, z)
    }
}

/// Screen-space footprint of one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub center: Vector2<f64>,
    pub cov: Matrix2<f64>,
    /// Inverse of `cov`.
    pub conic: Matrix2<f64>,
    pub depth: f64,
    /// Half-extent of the 3-sigma bounding square, in pixels.
    pub radius: f64,
}

/// Perspective projection with `cov2d = J W Sigma W^T J^T + 0.3 I`; `None`
/// when the point is behind the near plane.
pub fn project(p: &GaussianPoint, cam: &Camera) -> Option<Projection> {
    let t = cam.to_camera(&p.position);
    if t.z <= NEAR_PLANE {
        return None;
    }
    let (z, z2) = (t.z, t.z * t.z);
    let j = nalgebra::Matrix2x3::new(cam.fx / z, 0.0, -cam.fx * t.x / z2, 0.0, cam.fy / z, -cam.fy * t.y / z2);
    let m = j * cam.rotation;
    let cov = m * p.covariance() * m.transpose() + Matrix2::identity() * SCREEN_BLUR;
    let conic = cov.try_inverse()?;
    let center = Vector2::new(cam.fx * t.x / z + cam.cx, cam.fy * t.y / z + cam.cy);
    let mid = 0.5 * (cov[(0, 0)] + cov[(1, 1)]);
    let det = cov.determinant();
    let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
    Some(Projection { center, cov, conic, depth: z, radius: (CUTOFF_SQ * lambda_max).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn point(scale: Vec3, rot: UnitQuaternion<f64>) -> GaussianPoint {
        let q = rot.into_inner();
        GaussianPoint::new(Vec3::new(0.1, -0.2, 0.3), scale, [q.w, q.i, q.j, q.k], 0.9, MaterialParams::default())
            .unwrap()
    }

    #[test]
    fn weight_examples() {
        let p = point(Vec3::repeat(0.5), UnitQuaternion::identity());
        assert_eq!(gaussian_weight(&p.position, &p).unwrap(), 1.0);
        let x = p.position + Vec3::new(0.0, 0.5, 0.0);
        assert!((gaussian_weight(&x, &p).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn weight_matches_dense_solve() {
        let rot = UnitQuaternion::from_euler_angles(0.3, -0.7, 1.1);
        let p = point(Vec3::new(0.2, 0.7, 0.05), rot);
        let x = Vec3::new(0.3, 0.1, 0.2);
        let d = x - p.position;
        let sol = p.covariance().lu().solve(&d).unwrap();
        let expect = (-0.5 * d.dot(&sol)).exp();
        assert!((gaussian_weight(&x, &p).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn degenerate_covariance_is_an_error() {
        let p = point(Vec3::new(1.0, 1.0, 1e-7), UnitQuaternion::identity());
        assert!(matches!(gaussian_weight(&Vec3::zeros(), &p), Err(Error::DegenerateCovariance(_))));
    }

    #[test]
    fn constructor_validates() {
        let m = MaterialParams::default();
        assert!(GaussianPoint::new(Vec3::zeros(), Vec3::repeat(1.0), [1.0, 0.1, 0.0, 0.0], 0.5, m).is_err());
        assert!(GaussianPoint::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 1.0), [1.0, 0.0, 0.0, 0.0], 0.5, m).is_err());
        assert!(GaussianPoint::new(Vec3::zeros(), Vec3::repeat(1.0), [1.0, 0.0, 0.0, 0.0], 0.0, m).is_err());
    }

    #[test]
    fn shortest_axis_examples() {
        let p = point(Vec3::new(1.0, 1.0, 0.1), UnitQuaternion::identity());
        // Camera on +z looks along -z.
        assert_eq!(shortest_axis_normal(&p, &-Vec3::z()), Vec3::z());
        assert_eq!(shortest_axis_normal(&p, &Vec3::z()), -Vec3::z());
    }

    #[test]
    fn shortest_axis_is_min_eigenvector() {
        let rot = UnitQuaternion::from_euler_angles(0.9, 0.2, -1.4);
        let p = point(Vec3::new(0.3, 0.05, 0.2), rot);
        let n = shortest_axis_normal(&p, &Vec3::new(0.2, 0.3, -1.0).normalize());
        let eig = p.covariance().symmetric_eigen();
        let k = eig.eigenvalues.imin();
        let e: Vector3<f64> = eig.eigenvectors.column(k).into();
        assert!((n.dot(&e).abs() - 1.0).abs() < 1e-10);
        assert!((p.covariance() * n - n * eig.eigenvalues[k]).norm() < 1e-12);
    }

    #[test]
    fn look_at_axes() {
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Vec3::y(), 1.0, 32, 24).unwrap();
        assert!((cam.center() - Vec3::new(0.0, 0.0, 3.0)).norm() < 1e-12);
        let t = cam.to_camera(&Vec3::zeros());
        assert!((t - Vec3::new(0.0, 0.0, 3.0)).norm() < 1e-12);
        // World +y is image up, i.e. camera -y.
        assert!(cam.to_camera(&Vec3::y()).y < 0.0);
        assert!((cam.fov_x() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gl_matrix_round_trip() {
        let cam = Camera::look_at(Vec3::new(1.0, 2.0, 3.0), Vec3::new(0.1, 0.0, -0.2), Vec3::y(), 0.8, 20, 10).unwrap();
        let back = Camera::from_c2w_gl(&cam.to_c2w_gl(), cam.fov_x(), 20, 10).unwrap();
        assert!((back.rotation - cam.rotation).abs().max() < 1e-12);
        assert!((back.translation - cam.translation).norm() < 1e-12);
    }

    #[test]
    fn on_axis_projection_is_isotropic() {
        let sigma = 0.1;
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, 4.0), Vec3::zeros(), Vec3::y(), 0.9, 64, 64).unwrap();
        let p = GaussianPoint::new(Vec3::zeros(), Vec3::repeat(sigma), [1.0, 0.0, 0.0, 0.0], 1.0, MaterialParams::default())
            .unwrap();
        let pr = project(&p, &cam).unwrap();
        let expect = (cam.fx * sigma / 4.0).powi(2) + SCREEN_BLUR;
        assert!((pr.cov[(0, 0)] - expect).abs() < 1e-6);
        assert!((pr.cov[(1, 1)] - expect).abs() < 1e-6);
        assert!(pr.cov[(0, 1)].abs() < 1e-12);
        assert!((pr.center - Vector2::new(32.0, 32.0)).norm() < 1e-12);
        assert_eq!(pr.depth, 4.0);
    }

    #[test]
    fn doubling_depth_quarters_variance() {
        let p = GaussianPoint::new(Vec3::zeros(), Vec3::repeat(0.1), [1.0, 0.0, 0.0, 0.0], 1.0, MaterialParams::default())
            .unwrap();
        let near = Camera::look_at(Vec3::new(0.0, 0.0, 2.0), Vec3::zeros(), Vec3::y(), 0.9, 64, 64).unwrap();
        let far = Camera::look_at(Vec3::new(0.0, 0.0, 4.0), Vec3::zeros(), Vec3::y(), 0.9, 64, 64).unwrap();
        let a = project(&p, &near).unwrap().cov[(0, 0)] - SCREEN_BLUR;
        let b = project(&p, &far).unwrap().cov[(0, 0)] - SCREEN_BLUR;
        assert!((a / b - 4.0).abs() < 1e-9);
    }

    #[test]
    fn off_axis_matches_numeric_jacobian() {
        let cam = Camera::look_at(Vec3::new(0.5, 1.0, 3.0), Vec3::zeros(), Vec3::y(), 0.9, 64, 48).unwrap();
        let rot = UnitQuaternion::from_euler_angles(0.4, 0.1, -0.3);
        let q = rot.into_inner();
        let p = GaussianPoint::new(Vec3::new(0.6, -0.4, 0.2), Vec3::new(0.1, 0.05, 0.2), [q.w, q.i, q.j, q.k], 1.0, MaterialParams::default())
            .unwrap();
        let proj = |x: &Vec3| {
            let t = cam.to_camera(x);
            Vector2::new(cam.fx * t.x / t.z + cam.cx, cam.fy * t.y / t.z + cam.cy)
        };
        let h = 1e-6;
        let mut jac = nalgebra::Matrix2x3::zeros();
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = h;
            let col = (proj(&(p.position + e)) - proj(&(p.position - e))) / (2.0 * h);
            jac.set_column(k, &col);
        }
        let expect = jac * p.covariance() * jac.transpose() + Matrix2::identity() * SCREEN_BLUR;
        let got = project(&p, &cam).unwrap().cov;
        assert!((got - expect).abs().max() < 1e-5 * expect.abs().max());
    }

    #[test]
    fn behind_camera_is_culled() {
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Vec3::y(), 0.9, 16, 16).unwrap();
        let p = GaussianPoint::new(Vec3::new(0.0, 0.0, 5.0), Vec3::repeat(0.1), [1.0, 0.0, 0.0, 0.0], 1.0, MaterialParams::default())
            .unwrap();
        assert!(project(&p, &cam).is_none());
    }
}
