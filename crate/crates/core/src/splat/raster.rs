use nalgebra::Vector2;
use rayon::prelude::*;

use super::{project, shortest_axis_normal, Camera, GaussianPoint, Projection, CUTOFF_SQ, MAX_CONDITION};
use crate::brdf::BrdfLut;
use crate::envmap::PrefilteredEnv;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{Rgb, Vec3};
use crate::shading::{postprocess, PostProcessConfig, ShadingModel, ShadingQuery};

/// Blending stops once transmittance drops below this.
pub const TRANSMITTANCE_EPS: f64 = 1e-4;
/// Pixels with coverage at or below this are excluded from depth normals.
pub const ALPHA_VALID: f64 = 0.5;

/// Per-pixel blend weights for a fixed geometry and camera. Colors enter
/// linearly, so the plan is reused across shading changes.
#[derive(Debug, Clone)]
pub struct BlendPlan {
    pub width: usize,
    pub height: usize,
    offsets: Vec<usize>,
    entries: Vec<(u32, f64)>,
    point_offsets: Vec<usize>,
    point_entries: Vec<(u32, f64)>,
    pub alpha: Vec<f64>,
    pub depth: Vec<f64>,
    /// Alpha-blended world-space normals, not renormalized.
    pub normal: Vec<Vec3>,
    /// Per-point normal and view direction used for shading.
    pub point_normals: Vec<Vec3>,
    pub point_views: Vec<Vec3>,
}

struct PixelBlend {
    entries: Vec<(u32, f64)>,
    alpha: f64,
    depth: f64,
    normal: Vec3,
}

fn blend_pixel(
    px: Vector2<f64>,
    candidates: &[usize],
    proj: &[Option<Projection>],
    scene: &[GaussianPoint],
    normals: &[Vec3],
    scratch: &mut Vec<(f64, usize, f64)>,
) -> PixelBlend {
    scratch.clear();
    for &i in candidates {
        let p = proj[i].as_ref().expect("candidates are projected");
        let d = px - p.center;
        if d.x.abs() > p.radius || d.y.abs() > p.radius {
            continue;
        }
        let d2 = (p.conic * d).dot(&d);
        if d2 > CUTOFF_SQ {
            continue;
        }
        scratch.push((p.depth, i, (-0.5 * d2).exp()));
    }
    scratch.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut t = 1.0;
    let mut out = PixelBlend { entries: Vec::with_capacity(scratch.len()), alpha: 0.0, depth: 0.0, normal: Vec3::zeros() };
    for &(z, i, g) in scratch.iter() {
        let a = scene[i].opacity * g;
        let w = a * t;
        out.entries.push((i as u32, w));
        out.depth += w * z;
        out.normal += normals[i] * w;
        t *= 1.0 - a;
        if t < TRANSMITTANCE_EPS {
            break;
        }
    }
    out.alpha = out.entries.iter().map(|e| e.1).sum();
    if out.alpha > 0.0 {
        out.depth /= out.alpha;
    }
    out
}

impl BlendPlan {
    pub fn build(scene: &[GaussianPoint], cam: &Camera) -> Result<Self> {
        if scene.is_empty() {
            return Err(Error::invalid("scene has no points"));
        }
        for p in scene {
            let c = p.condition_number();
            if !(c <= MAX_CONDITION) {
                return Err(Error::DegenerateCovariance(c));
            }
        }
        let center = cam.center();
        let proj: Vec<Option<Projection>> = scene.par_iter().map(|p| project(p, cam)).collect();
        let point_views: Vec<Vec3> = scene
            .iter()
            .map(|p| (center - p.position).try_normalize(1e-12).unwrap_or(Vec3::z()))
            .collect();
        let point_normals: Vec<Vec3> =
            scene.iter().zip(&point_views).map(|(p, v)| shortest_axis_normal(p, &-v)).collect();
        let (w, h) = (cam.width, cam.height);
        let rows: Vec<Vec<PixelBlend>> = (0..h)
            .into_par_iter()
            .map(|y| {
                let py = y as f64 + 0.5;
                let cands: Vec<usize> = proj
                    .iter()
                    .enumerate()
                    .filter_map(|(i, p)| p.as_ref().filter(|p| (p.center.y - py).abs() <= p.radius).map(|_| i))
                    .collect();
                let mut scratch = Vec::new();
                (0..w)
                    .map(|x| {
                        let px = Vector2::new(x as f64 + 0.5, py);
                        blend_pixel(px, &cands, &proj, scene, &point_normals, &mut scratch)
                    })
                    .collect()
            })
            .collect();
        let n = w * h;
        let mut plan = BlendPlan {
            width: w,
            height: h,
            offsets: Vec::with_capacity(n + 1),
            entries: Vec::new(),
            point_offsets: Vec::new(),
            point_entries: Vec::new(),
            alpha: Vec::with_capacity(n),
            depth: Vec::with_capacity(n),
            normal: Vec::with_capacity(n),
            point_normals,
            point_views,
        };
        plan.offsets.push(0);
        for pb in rows.into_iter().flatten() {
            plan.entries.extend_from_slice(&pb.entries);
            plan.offsets.push(plan.entries.len());
            plan.alpha.push(pb.alpha);
            plan.depth.push(pb.depth);
            plan.normal.push(pb.normal);
        }
        // Transpose: per-point list of (pixel, weight) in pixel order.
        let mut counts = vec![0usize; scene.len() + 1];
        for &(i, _) in &plan.entries {
            counts[i as usize + 1] += 1;
        }
        for i in 0..scene.len() {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        plan.point_entries = vec![(0, 0.0); plan.entries.len()];
        for p in 0..n {
            for &(i, wt) in &plan.entries[plan.offsets[p]..plan.offsets[p + 1]] {
                plan.point_entries[fill[i as usize]] = (p as u32, wt);
                fill[i as usize] += 1;
            }
        }
        plan.point_offsets = counts;
        Ok(plan)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn point_count(&self) -> usize {
        self.point_offsets.len() - 1
    }

    /// `(point, weight)` pairs front to back.
    pub fn pixel_entries(&self, pixel: usize) -> &[(u32, f64)] {
        &self.entries[self.offsets[pixel]..self.offsets[pixel + 1]]
    }

    /// `(pixel, weight)` pairs in pixel order.
    pub fn point_entries(&self, point: usize) -> &[(u32, f64)] {
        &self.point_entries[self.point_offsets[point]..self.point_offsets[point + 1]]
    }

    /// Linear pixel radiance from per-point colors.
    pub fn composite(&self, colors: &[Rgb]) -> Vec<Rgb> {
        (0..self.pixel_count())
            .into_par_iter()
            .map(|p| self.pixel_entries(p).iter().fold(Rgb::zeros(), |acc, &(i, w)| acc + colors[i as usize] * w))
            .collect()
    }

    /// Adjoint of [`BlendPlan::composite`].
    pub fn splat_gradient(&self, pixel_grads: &[Rgb]) -> Vec<Rgb> {
        (0..self.point_count())
            .into_par_iter()
            .map(|i| {
                self.point_entries(i).iter().fold(Rgb::zeros(), |acc, &(p, w)| acc + pixel_grads[p as usize] * w)
            })
            .collect()
    }

    /// Blended normals renormalized and rotated into camera space; zero
    /// where nothing is covered.
    pub fn camera_normals(&self, cam: &Camera) -> Vec<Vec3> {
        self.normal
            .iter()
            .map(|n| n.try_normalize(1e-12).map(|n| cam.rotation * n).unwrap_or_else(Vec3::zeros))
            .collect()
    }
}

/// Per-point shaded radiance for one camera and environment.
#[derive(Debug, Clone)]
pub struct PointShading {
    pub colors: Vec<Rgb>,
    pub queries: Vec<ShadingQuery>,
}

pub fn shade_points(
    scene: &[GaussianPoint],
    plan: &BlendPlan,
    env: &PrefilteredEnv,
    lut: &BrdfLut,
    model: ShadingModel,
) -> PointShading {
    let (colors, queries) = scene
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let q = ShadingQuery::new(&plan.point_normals[i], &plan.point_views[i], p.material.roughness, env, lut);
            (q.radiance(model, &p.material), q)
        })
        .unzip();
    PointShading { colors, queries }
}

#[derive(Debug, Clone)]
pub struct RenderedImage {
    /// Post-processed display values in `[0, 1]`.
    pub color: Image,
    /// Blended radiance before post-processing.
    pub linear: Image,
    pub depth: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Camera-space unit normals, zero where uncovered.
    pub normal: Vec<Vec3>,
}

impl RenderedImage {
    pub fn from_plan(plan: &BlendPlan, cam: &Camera, linear: Vec<Rgb>, cfg: &PostProcessConfig) -> Result<Self> {
        let display = linear.iter().map(|l| postprocess(l, cfg)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            color: Image::from_pixels(plan.width, plan.height, &display)?,
            linear: Image::from_pixels(plan.width, plan.height, &linear)?,
            depth: plan.depth.clone(),
            alpha: plan.alpha.clone(),
            normal: plan.camera_normals(cam),
        })
    }
}

pub fn render_with_model(
    scene: &[GaussianPoint],
    cam: &Camera,
    env: &PrefilteredEnv,
    lut: &BrdfLut,
    cfg: &PostProcessConfig,
    model: ShadingModel,
) -> Result<RenderedImage> {
    let plan = BlendPlan::build(scene, cam)?;
    let shading = shade_points(scene, &plan, env, lut, model);
    RenderedImage::from_plan(&plan, cam, plan.composite(&shading.colors), cfg)
}

/// Render with the specular-tint shading model.
pub fn render(
    scene: &[GaussianPoint],
    cam: &Camera,
    env: &PrefilteredEnv,
    lut: &BrdfLut,
    cfg: &PostProcessConfig,
) -> Result<RenderedImage> {
    render_with_model(scene, cam, env, lut, cfg, ShadingModel::SpecularTint)
}

/// Camera-space normals from central differences of the back-projected
/// depth. `None` where the pixel or any 4-neighbour has alpha <= 0.5.
pub fn depth_to_normal(depth: &[f64], alpha: &[f64], cam: &Camera) -> Vec<Option<Vec3>> {
    let (w, h) = (cam.width, cam.height);
    let ok = |x: usize, y: usize| alpha[y * w + x] > ALPHA_VALID;
    let at = |x: usize, y: usize| cam.unproject(x as f64 + 0.5, y as f64 + 0.5, depth[y * w + x]);
    (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            if x == 0 || y == 0 || x + 1 >= w || y + 1 >= h {
                return None;
            }
            if !(ok(x, y) && ok(x - 1, y) && ok(x + 1, y) && ok(x, y - 1) && ok(x, y + 1)) {
                return None;
            }
            let tx = at(x + 1, y) - at(x - 1, y);
            let ty = at(x, y + 1) - at(x, y - 1);
            let n = tx.cross(&ty).try_normalize(1e-300)?;
            Some(if n.dot(&at(x, y)) > 0.0 { -n } else { n })
        })
        .collect()
}

pub(crate) fn depth_normal_from_plan(plan: &BlendPlan, cam: &Camera, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let rendered = plan.camera_normals(cam);
    let derived = depth_to_normal(&plan.depth, &plan.alpha, cam);
    let (mut sum, mut count) = (0.0, 0usize);
    for (n, d) in rendered.iter().zip(&derived) {
        if let Some(d) = d {
            sum += (n - d).norm_squared();
            count += 1;
        }
    }
    if count == 0 {
        log::warn!("depth-normal loss: no valid pixels");
        return 0.0;
    }
    lambda * sum / count as f64
}

/// `lambda` times the mean squared difference between blended point
/// normals and depth-derived normals over valid pixels.
pub fn loss_depth_normal(scene: &[GaussianPoint], cam: &Camera, lambda: f64) -> Result<f64> {
    let plan = BlendPlan::build(scene, cam)?;
    Ok(depth_normal_from_plan(&plan, cam, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envmap::{CubeMap, EnvPrefilter, PrefilterSettings};
    use crate::math::gray;
    use crate::shading::{shade_proposed, MaterialParams};

    fn cam() -> Camera {
        Camera::look_at(Vec3::new(0.0, 0.0, 4.0), Vec3::zeros(), Vec3::y(), 0.8, 16, 16).unwrap()
    }

    fn flat(pos: Vec3, size: f64, opacity: f64, mat: MaterialParams) -> GaussianPoint {
        GaussianPoint::new(pos, Vec3::new(size, size, size * 0.01), [1.0, 0.0, 0.0, 0.0], opacity, mat).unwrap()
    }

    fn env(c: f64) -> PrefilteredEnv {
        EnvPrefilter::new(8, PrefilterSettings { samples: 32, ..PrefilterSettings::for_base(8) })
            .unwrap()
            .apply(&CubeMap::constant(8, gray(c)))
    }

    #[test]
    fn weights_sum_to_alpha() {
        let scene: Vec<_> = (0..5)
            .map(|i| flat(Vec3::new(0.1 * i as f64, -0.05 * i as f64, 0.1 * i as f64), 0.5, 0.4, MaterialParams::default()))
            .collect();
        let plan = BlendPlan::build(&scene, &cam()).unwrap();
        for p in 0..plan.pixel_count() {
            let s: f64 = plan.pixel_entries(p).iter().map(|e| e.1).sum();
            assert_eq!(s, plan.alpha[p]);
            assert!((0.0..=1.0).contains(&plan.alpha[p]));
        }
    }

    #[test]
    fn opaque_front_hides_back() {
        let red = MaterialParams::new(Rgb::new(1.0, 0.0, 0.0), gray(0.0), 1.0);
        let blue = MaterialParams::new(Rgb::new(0.0, 0.0, 1.0), gray(0.0), 1.0);
        let c = cam();
        // Front point centered on pixel (8, 8) so its effective alpha there is 1.
        let at = |depth: f64| c.rotation.transpose() * (c.unproject(8.5, 8.5, depth) - c.translation);
        let front = flat(at(4.0), 0.3, 1.0, red);
        let scene = vec![flat(at(4.5), 0.3, 1.0, blue), front.clone()];
        let (e, lut, cfg) = (env(1.0), BrdfLut::default_table(), PostProcessConfig::recommended());
        let both = render(&scene, &cam(), &e, &lut, &cfg).unwrap();
        let alone = render(&[front], &cam(), &e, &lut, &cfg).unwrap();
        assert_eq!(both.linear.pixel(8, 8), alone.linear.pixel(8, 8));
        assert!(both.linear.pixel(8, 8).x > both.linear.pixel(8, 8).z);
    }

    #[test]
    fn single_opaque_point_matches_shading() {
        let lut = BrdfLut::default_table();
        let e = env(0.7);
        let mat = MaterialParams::new(Rgb::new(0.6, 0.3, 0.2), gray(0.1), 0.5);
        let cam = cam();
        // Center exactly at a pixel center.
        let world = cam.rotation.transpose() * (cam.unproject(8.5, 8.5, 4.0) - cam.translation);
        let p = flat(world, 0.4, 1.0, mat);
        let out = render(std::slice::from_ref(&p), &cam, &e, &lut, &PostProcessConfig::recommended()).unwrap();
        let v = (cam.center() - p.position).normalize();
        let n = shortest_axis_normal(&p, &-v);
        let expect = postprocess(&shade_proposed(&mat, &n, &v, &e, &lut), &PostProcessConfig::recommended()).unwrap();
        assert!((out.color.pixel(8, 8) - expect).abs().max() < 1e-3);
        assert_eq!(out.alpha[8 * 16 + 8], 1.0);
    }

    #[test]
    fn background_is_black() {
        let scene = vec![flat(Vec3::new(100.0, 0.0, 0.0), 0.1, 0.5, MaterialParams::default())];
        let out = render(&scene, &cam(), &env(1.0), &BrdfLut::default_table(), &PostProcessConfig::recommended()).unwrap();
        assert!(out.color.data().iter().all(|&v| v == 0.0));
        assert!(out.alpha.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn empty_scene_is_an_error() {
        assert!(BlendPlan::build(&[], &cam()).is_err());
    }

    #[test]
    fn fronto_parallel_depth_normal() {
        let c = cam();
        let depth = vec![3.0; 256];
        let alpha = vec![1.0; 256];
        let n = depth_to_normal(&depth, &alpha, &c);
        let interior = n.iter().filter(|v| v.is_some()).count();
        assert_eq!(interior, 14 * 14);
        for v in n.into_iter().flatten() {
            assert!((v - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn isolated_pixel_is_invalid() {
        let c = cam();
        let mut alpha = vec![0.0; 256];
        alpha[8 * 16 + 8] = 1.0;
        assert!(depth_to_normal(&vec![2.0; 256], &alpha, &c).iter().all(|v| v.is_none()));
    }

    #[test]
    fn composite_and_splat_are_adjoint() {
        let scene: Vec<_> = (0..4)
            .map(|i| flat(Vec3::new(0.2 * i as f64 - 0.3, 0.1, 0.05 * i as f64), 0.4, 0.6, MaterialParams::default()))
            .collect();
        let plan = BlendPlan::build(&scene, &cam()).unwrap();
        let colors: Vec<Rgb> = (0..4).map(|i| Rgb::new(i as f64, 1.0, 0.5 * i as f64)).collect();
        let g: Vec<Rgb> = (0..256).map(|p| Rgb::new((p % 7) as f64, (p % 3) as f64, 1.0)).collect();
        let lhs: f64 = plan.composite(&colors).iter().zip(&g).map(|(a, b)| a.dot(b)).sum();
        let rhs: f64 = plan.splat_gradient(&g).iter().zip(&colors).map(|(a, b)| a.dot(b)).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs());
    }
}
