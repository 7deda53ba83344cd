//! Procedural test scenes, analytic environments and ground-truth renders.

use std::f64::consts::PI;

use nalgebra::UnitQuaternion;

use crate::envmap::{latlong_to_cube, CubeMap, LatLongImage};
use crate::error::{Error, Result};
use crate::math::{rgb, Rgb, Vec3};
use crate::optim::{relight_views, FitConfig, RelightSettings, TrainingSet, View};
use crate::shading::{MaterialParams, PostProcessConfig};
use crate::splat::{Camera, GaussianPoint};

pub const ENV_NAMES: [&str; 5] = ["sky_gradient", "three_point", "single_hot", "sunset", "window"];

/// Normalized lobe `exp(k (cos - 1))` around `axis`.
fn lobe(d: &Vec3, axis: &Vec3, k: f64) -> f64 {
    (k * (d.dot(&axis.normalize()) - 1.0)).exp()
}

fn sky_gradient(d: &Vec3) -> Rgb {
    if d.y >= 0.0 {
        let t = d.y.sqrt();
        rgb(0.9, 0.85, 0.75) * (1.0 - t) + rgb(0.25, 0.45, 0.95) * t
    } else {
        rgb(0.3, 0.24, 0.18) * (1.0 + 0.5 * d.y)
    }
}

fn three_point(d: &Vec3) -> Rgb {
    let key = rgb(4.0, 3.6, 3.0) * lobe(d, &Vec3::new(1.0, 1.0, 1.0), 40.0);
    let fill = rgb(0.5, 0.7, 1.2) * lobe(d, &Vec3::new(-1.0, 0.2, 0.8), 12.0);
    let rim = rgb(3.0, 2.0, 1.2) * lobe(d, &Vec3::new(0.0, 0.6, -1.0), 40.0);
    rgb(0.03, 0.03, 0.03) + key + fill + rim
}

fn sunset(d: &Vec3) -> Rgb {
    let sun = rgb(3.0, 1.6, 0.6) * lobe(d, &Vec3::new(1.0, 0.15, 0.2), 15.0);
    let glow = rgb(0.6, 0.3, 0.1) * (-d.y.abs() / 0.15).exp() * d.x.max(0.0);
    let sky = rgb(0.08, 0.05, 0.1) * (0.5 + 0.5 * d.y.max(0.0));
    sky + sun + glow
}

fn window(d: &Vec3) -> Rgb {
    let light = rgb(1.2, 1.5, 2.0) * lobe(d, &Vec3::new(-1.0, 0.3, -0.3), 6.0);
    rgb(0.05, 0.06, 0.08) + light
}

/// Direction of the hot texel in [`analytic_env`]`("single_hot")`.
pub fn single_hot_direction() -> Vec3 {
    Vec3::new(-0.7, 0.5, 0.5).normalize()
}

/// Named analytic lat-long environment of the given height.
pub fn analytic_env(name: &str, height: usize) -> Result<LatLongImage> {
    if height < 4 {
        return Err(Error::invalid("environment height must be >= 4"));
    }
    Ok(match name {
        "sky_gradient" => LatLongImage::from_fn(height, sky_gradient),
        "three_point" => LatLongImage::from_fn(height, three_point),
        "sunset" => LatLongImage::from_fn(height, sunset),
        "window" => LatLongImage::from_fn(height, window),
        "single_hot" => {
            let mut img = LatLongImage::constant(height, Rgb::repeat(0.02));
            let d = single_hot_direction();
            let (w, h) = (img.width(), img.height());
            let theta = d.y.acos();
            let phi = d.z.atan2(d.x).rem_euclid(2.0 * PI);
            let row = ((theta / PI * h as f64) as usize).min(h - 1);
            let col = ((phi / (2.0 * PI) * w as f64) as usize).min(w - 1);
            let theta_c = PI * (row as f64 + 0.5) / h as f64;
            let omega = (2.0 * PI / w as f64) * (PI / h as f64) * theta_c.sin();
            // Irradiance of 1.5 on a surface facing the texel.
            img.set_pixel(col, row, Rgb::repeat(1.5 * PI / omega));
            img
        }
        _ => return Err(Error::invalid(format!("unknown environment '{name}' (known: {})", ENV_NAMES.join(", ")))),
    })
}

fn disk_point(position: Vec3, normal: Vec3, radius: f64, material: MaterialParams) -> Result<GaussianPoint> {
    let q = UnitQuaternion::rotation_between(&Vec3::z(), &normal)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vec3::x_axis(), PI));
    let q = q.quaternion();
    GaussianPoint::new(position, Vec3::new(radius, radius, 0.1 * radius), [q.w, q.i, q.j, q.k], 0.95, material)
}

/// Ground-truth material of the toy sphere as a function of the unit
/// direction. Specular tint is gray and `|b| + |s| <= 1`.
pub fn sphere_material(n: &Vec3) -> MaterialParams {
    let phi = n.z.atan2(n.x);
    let band = |o: f64| 0.5 + 0.5 * (3.0 * phi + 2.0 * n.y + o).sin();
    let basecolor = rgb(0.1 + 0.35 * band(0.0), 0.1 + 0.35 * band(2.1), 0.1 + 0.35 * band(4.2));
    let s = 0.04 + 0.08 * (0.5 + 0.5 * (2.0 * n.y).cos());
    let roughness = 0.3 + 0.4 * (0.5 + 0.5 * (2.0 * phi + n.y).sin());
    MaterialParams::new(basecolor, Rgb::repeat(s), roughness)
}

/// `n` flattened Gaussians on a Fibonacci lattice over a sphere, oriented
/// tangentially so their shortest axis is radial.
pub fn fibonacci_sphere(n: usize, radius: f64) -> Result<Vec<GaussianPoint>> {
    if n == 0 || !(radius > 0.0) {
        return Err(Error::invalid("sphere needs n >= 1 points and a positive radius"));
    }
    let golden = PI * (3.0 - 5f64.sqrt());
    let sigma = 0.6 * radius * (4.0 * PI / n as f64).sqrt();
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let a = golden * i as f64;
            let d = Vec3::new(r * a.cos(), y, r * a.sin());
            disk_point(d * radius, d, sigma, sphere_material(&d))
        })
        .collect()
}

/// Eight disks on the corners of a cube, each facing outward, with
/// distinct interior materials.
pub fn recovery_scene() -> Result<Vec<GaussianPoint>> {
    let mut out = Vec::with_capacity(8);
    for i in 0..8 {
        let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
        let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
        let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
        let n = Vec3::new(sx, sy, sz).normalize();
        let t = i as f64 / 7.0;
        let m = MaterialParams::new(
            rgb(0.15 + 0.3 * t, 0.45 - 0.25 * t, 0.2 + 0.2 * ((i * 3) % 8) as f64 / 7.0),
            Rgb::repeat(0.05 + 0.1 * ((i * 5) % 8) as f64 / 7.0),
            0.3 + 0.45 * ((i * 3 + 1) % 8) as f64 / 7.0,
        );
        out.push(disk_point(n * 0.6, n, 0.22, m)?);
    }
    Ok(out)
}

/// `count` cameras on a ring around the origin at the given elevation
/// (degrees), all looking at the origin.
pub fn ring_cameras(
    count: usize,
    distance: f64,
    elevation_deg: f64,
    azimuth_offset_deg: f64,
    fov_x: f64,
    size: usize,
) -> Result<Vec<Camera>> {
    let el = elevation_deg.to_radians();
    (0..count)
        .map(|i| {
            let az = (azimuth_offset_deg + 360.0 * i as f64 / count as f64).to_radians();
            let eye = distance * Vec3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos());
            Camera::look_at(eye, Vec3::zeros(), Vec3::y(), fov_x, size, size)
        })
        .collect()
}

/// Render display-space targets of `scene` under an HDR map with the
/// recommended post-processing.
pub fn render_views(scene: &[GaussianPoint], hdr: &LatLongImage, cams: &[Camera], settings: &RelightSettings) -> Result<Vec<View>> {
    let renders = relight_views(scene, hdr, cams, crate::brdf::shared_lut(), &PostProcessConfig::recommended(), settings)?;
    Ok(renders.into_iter().zip(cams).map(|(r, c)| View { camera: c.clone(), target: r.color }).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub points: usize,
    pub image_size: usize,
    pub views_per_env: usize,
    pub train_envs: Vec<String>,
    pub heldout_env: String,
    pub env_size: usize,
    pub samples: usize,
    pub latlong_height: usize,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            points: 256,
            image_size: 40,
            views_per_env: 8,
            train_envs: vec!["sky_gradient".into(), "single_hot".into(), "sunset".into()],
            heldout_env: "three_point".into(),
            env_size: 16,
            samples: 512,
            latlong_height: 64,
        }
    }
}

const CAMERA_DISTANCE: f64 = 3.5;
const FOV_X_DEG: f64 = 45.0;
const ELEVATIONS: [f64; 4] = [15.0, -10.0, 35.0, 0.0];

/// Toy sphere with ground-truth views under several training environments
/// (one camera ring per environment) and one held-out environment.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub spec: FixtureSpec,
    pub scene: Vec<GaussianPoint>,
    pub train_hdrs: Vec<LatLongImage>,
    pub heldout_hdr: LatLongImage,
    pub camera_sets: Vec<Vec<Camera>>,
    pub train_views: Vec<Vec<View>>,
    pub heldout_views: Vec<View>,
}

impl Fixture {
    pub fn toy_sphere(spec: FixtureSpec) -> Result<Self> {
        if spec.train_envs.is_empty() || spec.views_per_env == 0 {
            return Err(Error::invalid("fixture needs training environments and views"));
        }
        let scene = fibonacci_sphere(spec.points, 1.0)?;
        let settings = Self::settings_of(&spec);
        let fov = FOV_X_DEG.to_radians();
        let nv = spec.views_per_env;
        let sets = spec.train_envs.len();
        let camera_sets = (0..sets)
            .map(|i| {
                let offset = 360.0 / nv as f64 * i as f64 / sets as f64;
                ring_cameras(nv, CAMERA_DISTANCE, ELEVATIONS[i % ELEVATIONS.len()], offset, fov, spec.image_size)
            })
            .collect::<Result<Vec<_>>>()?;
        let train_hdrs =
            spec.train_envs.iter().map(|n| analytic_env(n, spec.latlong_height)).collect::<Result<Vec<_>>>()?;
        let heldout_hdr = analytic_env(&spec.heldout_env, spec.latlong_height)?;
        let train_views = train_hdrs
            .iter()
            .zip(&camera_sets)
            .map(|(h, c)| render_views(&scene, h, c, &settings))
            .collect::<Result<Vec<_>>>()?;
        let held_cams = ring_cameras(nv, CAMERA_DISTANCE, 5.0, 180.0 / nv as f64 + 7.0, fov, spec.image_size)?;
        let heldout_views = render_views(&scene, &heldout_hdr, &held_cams, &settings)?;
        Ok(Self { spec, scene, train_hdrs, heldout_hdr, camera_sets, train_views, heldout_views })
    }

    fn settings_of(spec: &FixtureSpec) -> RelightSettings {
        RelightSettings { face_size: spec.env_size, samples: spec.samples, ..RelightSettings::default() }
    }

    pub fn relight_settings(&self) -> RelightSettings {
        Self::settings_of(&self.spec)
    }

    /// Fit defaults matched to this fixture's environment resolution.
    pub fn fit_config(&self) -> FitConfig {
        FitConfig { env_size: self.spec.env_size, prefilter_samples: self.spec.samples, ..FitConfig::default() }
    }

    /// The first `k` environments, each with its own camera ring.
    pub fn training(&self, k: usize) -> Result<TrainingSet> {
        if k == 0 || k > self.train_views.len() {
            return Err(Error::invalid(format!("k = {k} outside 1..={}", self.train_views.len())));
        }
        TrainingSet::new(self.train_views[..k].to_vec())
    }

    /// Single-environment baseline seeing the same cameras as
    /// [`Fixture::training`]`(rings)`, all under training environment `env`.
    pub fn single_env_baseline(&self, env: usize, rings: usize) -> Result<TrainingSet> {
        if rings == 0 || rings > self.camera_sets.len() || env >= self.train_hdrs.len() {
            return Err(Error::invalid(format!("env {env} / rings {rings} outside the fixture")));
        }
        let cams: Vec<Camera> = self.camera_sets[..rings].concat();
        TrainingSet::new(vec![render_views(&self.scene, &self.train_hdrs[env], &cams, &self.relight_settings())?])
    }

    /// Training environments resampled to cube maps at the fixture size.
    pub fn train_cubes(&self) -> Vec<CubeMap> {
        self.train_hdrs.iter().map(|h| latlong_to_cube(h, self.spec.env_size)).collect()
    }
}

/// Known-environment recovery setup: eight disks, two camera rings, one
/// environment.
#[derive(Debug, Clone)]
pub struct RecoveryFixture {
    pub scene: Vec<GaussianPoint>,
    pub hdr: LatLongImage,
    pub env: CubeMap,
    pub training: TrainingSet,
    pub env_size: usize,
    pub samples: usize,
}

impl RecoveryFixture {
    pub fn new(env_name: &str, image_size: usize) -> Result<Self> {
        let (env_size, samples) = (16, 512);
        let scene = recovery_scene()?;
        let hdr = analytic_env(env_name, 64)?;
        let fov = 40f64.to_radians();
        let mut cams = ring_cameras(6, 3.2, 25.0, 0.0, fov, image_size)?;
        cams.extend(ring_cameras(6, 3.2, -25.0, 30.0, fov, image_size)?);
        let settings = RelightSettings { face_size: env_size, samples, ..RelightSettings::default() };
        let views = render_views(&scene, &hdr, &cams, &settings)?;
        let env = latlong_to_cube(&hdr, env_size);
        Ok(Self { scene, hdr, env, training: TrainingSet::new(vec![views])?, env_size, samples })
    }

    /// Materials-only fit configuration for the known environment.
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            env_size: self.env_size,
            prefilter_samples: self.samples,
            optimize_envs: false,
            iterations: 2000,
            lr_decay: 0.01,
            ..FitConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_envs_are_finite_and_nonnegative() {
        for name in ENV_NAMES {
            let e = analytic_env(name, 16).unwrap();
            assert!(e.data().iter().all(|v| v.is_finite() && *v >= 0.0), "{name}");
        }
        assert!(analytic_env("nope", 16).is_err());
    }

    #[test]
    fn heldout_env_has_hdr_peaks() {
        assert!(analytic_env("three_point", 32).unwrap().max_value() > 1.0);
    }

    #[test]
    fn sphere_materials_respect_energy_bound() {
        for p in fibonacci_sphere(200, 1.0).unwrap() {
            let m = p.material;
            assert!(m.is_valid());
            assert!(m.basecolor.norm() + m.specular_tint.norm() <= 1.0);
            assert!((p.position.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn disk_normals_are_radial() {
        for p in fibonacci_sphere(50, 2.0).unwrap() {
            let n = crate::splat::shortest_axis_normal(&p, &(-p.position));
            assert!(n.dot(&p.position.normalize()) > 1.0 - 1e-9);
        }
    }
}
