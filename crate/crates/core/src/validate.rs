//! Oracle suites behind the `validate` command: split-sum shading against
//! Monte-Carlo integration, diffuse prefiltering against dense quadrature,
//! and analytic gradients against central differences.

use std::fmt::Write as _;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::brdf::{render_equation_mc, BrdfLut, BrdfParams};
use crate::envmap::{
    prefilter_diffuse, texel_direction, texel_solid_angle, CubeMap, EnvPrefilter, Face, PrefilterSettings,
    PrefilteredEnv, PrefilteredGrad, SpecularGradient,
};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{rgb, Rgb, Vec3};
use crate::optim::{evaluate_view, FitConfig, LossEval};
use crate::shading::{MaterialGrad, MaterialParams, ShadingModel, ShadingQuery};
use crate::splat::{BlendPlan, Camera, GaussianPoint};

pub const SUITES: [&str; 3] = ["splitsum", "prefilter", "gradients"];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckResult {
    fn below(suite: &'static str, name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { suite, name: name.into(), value, threshold, passed: value < threshold }
    }
}

/// Smooth, strictly positive analytic environment.
pub fn smooth_gradient_env(d: &Vec3) -> Rgb {
    rgb(0.6 + 0.3 * d.y + 0.1 * d.x, 0.5 + 0.35 * d.y, 0.45 + 0.4 * d.y - 0.05 * d.z)
}

/// `|a - b| / max(|a|, |b|)`, zero when both are below `floor`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    let m = a.abs().max(b.abs());
    if m < floor {
        0.0
    } else {
        (a - b).abs() / m
    }
}

/// Run one suite by name, or every suite for `"all"`.
pub fn run_suite(name: &str, lut: &BrdfLut) -> Result<Vec<CheckResult>> {
    match name {
        "splitsum" => splitsum_suite(lut),
        "prefilter" => prefilter_suite(),
        "gradients" => gradient_suite(lut),
        "all" => {
            let mut out = splitsum_suite(lut)?;
            out.extend(prefilter_suite()?);
            out.extend(gradient_suite(lut)?);
            Ok(out)
        }
        _ => Err(Error::invalid(format!("unknown suite '{name}' (known: {}, all)", SUITES.join(", ")))),
    }
}

pub fn format_table(results: &[CheckResult]) -> String {
    let mut s = format!("{:<10} {:<40} {:>12} {:>12}  result\n", "suite", "check", "value", "threshold");
    for r in results {
        let _ = writeln!(
            s,
            "{:<10} {:<40} {:>12.4e} {:>12.4e}  {}",
            r.suite,
            r.name,
            r.value,
            r.threshold,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    s
}

pub const SPLITSUM_ROUGHNESS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
/// View elevations above the surface, degrees.
pub const SPLITSUM_ELEVATION_DEG: [f64; 5] = [15.0, 30.0, 45.0, 60.0, 80.0];
pub const SPLITSUM_MC_SAMPLES: usize = 1 << 16;

/// Relative errors of split-sum shading against the Monte-Carlo oracle over
/// the roughness x elevation grid, as `(mean, max)` over grid cells and
/// channels.
pub fn splitsum_errors(lut: &BrdfLut) -> Result<(f64, f64)> {
    let base = 32;
    let map = CubeMap::from_fn(base, smooth_gradient_env);
    let env = EnvPrefilter::new(base, PrefilterSettings::for_base(base))?.apply(&map);
    let n = Vec3::y();
    let cells: Vec<(f64, f64)> = SPLITSUM_ROUGHNESS
        .iter()
        .flat_map(|&r| SPLITSUM_ELEVATION_DEG.iter().map(move |&e| (r, e)))
        .collect();
    let errs = cells
        .par_iter()
        .enumerate()
        .map(|(i, &(r, elev))| {
            let e = elev.to_radians();
            let v = Vec3::new(e.cos(), e.sin(), 0.0);
            let mat = MaterialParams::new(rgb(0.5, 0.4, 0.3), Rgb::repeat(0.5), r);
            let split = ShadingQuery::new(&n, &v, r, &env, lut).tint_radiance(&mat);
            let params = BrdfParams::tinted(mat.basecolor, mat.specular_tint, r);
            let mc = render_equation_mc(&params, &n, &v, &map, SPLITSUM_MC_SAMPLES, 1000 + i as u64)?;
            Ok((0..3).map(|c| relative_error(split[c], mc.value[c], 0.0)).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<f64> = errs.into_iter().flatten().collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let max = all.iter().cloned().fold(0.0, f64::max);
    Ok((mean, max))
}

pub fn splitsum_suite(lut: &BrdfLut) -> Result<Vec<CheckResult>> {
    let (mean, max) = splitsum_errors(lut)?;
    Ok(vec![
        CheckResult::below("splitsum", "mean relative error vs MC (5x5 grid)", mean, 0.05),
        CheckResult::below("splitsum", "max relative error vs MC (5x5 grid)", max, 0.12),
    ])
}

/// Cosine-weighted irradiance of a piecewise-constant cube map, integrated
/// on a grid `factor` times finer than the source texels.
pub fn brute_force_irradiance(map: &CubeMap, n: &Vec3, factor: usize) -> Rgb {
    let size = map.face_size();
    let fine = size * factor;
    let mut acc = Rgb::zeros();
    for face in Face::ALL {
        for row in 0..fine {
            for col in 0..fine {
                let l = texel_direction(face, (col as f64 + 0.5) / fine as f64, (row as f64 + 0.5) / fine as f64);
                let c = n.dot(&l);
                if c > 0.0 {
                    let t = map.texel_index(face, col / factor, row / factor);
                    acc += map.texel(t) * (c * texel_solid_angle(fine, col, row));
                }
            }
        }
    }
    acc / PI
}

/// Max relative texel error of the diffuse prefilter against
/// [`brute_force_irradiance`] at 4x sampling, 6x16 output.
pub fn diffuse_prefilter_error() -> Result<f64> {
    let map = CubeMap::from_fn(32, smooth_gradient_env);
    let out = prefilter_diffuse(&map, 16)?;
    let errs: Vec<f64> = (0..out.texel_count())
        .into_par_iter()
        .map(|t| {
            let reference = brute_force_irradiance(&map, &out.texel_center(t), 4);
            let got = out.texel(t);
            (0..3).map(|c| relative_error(got[c], reference[c], 0.0)).fold(0.0, f64::max)
        })
        .collect();
    Ok(errs.into_iter().fold(0.0, f64::max))
}

pub fn prefilter_suite() -> Result<Vec<CheckResult>> {
    Ok(vec![CheckResult::below(
        "prefilter",
        "diffuse vs 4x quadrature, max rel error",
        diffuse_prefilter_error()?,
        1e-3,
    )])
}

/// Keeps finite differences away from the piecewise-linear breakpoints in
/// roughness (LUT nodes and specular level roughnesses).
pub fn roughness_clear_of_kinks(r: f64, lut: &BrdfLut, env: &PrefilteredEnv, margin: f64) -> bool {
    let n = (lut.resolution() - 1) as f64;
    let lut_gap = ((r * n) - (r * n).round()).abs() / n;
    let level_gap = env.specular.iter().map(|l| (l.roughness - r).abs()).fold(f64::INFINITY, f64::min);
    lut_gap > margin && level_gap > margin && r > margin && r < 1.0 - margin
}

/// Worst relative error between analytic and central-difference shading
/// gradients over `configs` random configurations: material fields and
/// prefiltered texels.
pub fn shading_gradient_error(lut: &BrdfLut, configs: usize, h: f64, seed: u64) -> Result<f64> {
    let base = 16;
    let map = CubeMap::from_fn(base, smooth_gradient_env);
    let env = EnvPrefilter::new(base, PrefilterSettings { samples: 256, ..PrefilterSettings::for_base(base) })?
        .apply(&map);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = |rng: &mut ChaCha8Rng| loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let l = v.norm();
        if l > 0.1 && l <= 1.0 {
            return v / l;
        }
    };
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let n = unit(&mut rng);
        let mut v = unit(&mut rng);
        if n.dot(&v) < 0.05 {
            v = (v - 2.0 * n.dot(&v) * n + 0.1 * n).normalize();
        }
        let r = loop {
            let r = rng.gen_range(0.02..0.98);
            if roughness_clear_of_kinks(r, lut, &env, 10.0 * h) {
                break r;
            }
        };
        let mat = MaterialParams::new(
            Rgb::from_fn(|_, _| rng.gen_range(0.05..0.95)),
            Rgb::from_fn(|_, _| rng.gen_range(0.05..0.95)),
            r,
        );
        let w = Rgb::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let f = |m: &MaterialParams, e: &PrefilteredEnv| ShadingQuery::new(&n, &v, m.roughness, e, lut).tint_radiance(m).dot(&w);

        let q = ShadingQuery::new(&n, &v, r, &env, lut);
        let mut g = MaterialGrad::default();
        let mut eg = PrefilteredGrad::zeros_like(&env);
        q.backward(ShadingModel::SpecularTint, &mat, &w, &mut g, Some(&mut eg));

        let fd = |perturb: &dyn Fn(&mut MaterialParams, f64)| {
            let (mut p, mut m) = (mat, mat);
            perturb(&mut p, h);
            perturb(&mut m, -h);
            (f(&p, &env) - f(&m, &env)) / (2.0 * h)
        };
        for c in 0..3 {
            worst = worst.max(relative_error(g.basecolor[c], fd(&|m, d| m.basecolor[c] += d), 1e-10));
            worst = worst.max(relative_error(g.specular_tint[c], fd(&|m, d| m.specular_tint[c] += d), 1e-10));
        }
        worst = worst.max(relative_error(g.roughness, fd(&|m, d| m.roughness += d), 1e-10));

        // Texels with the largest analytic gradient in each buffer.
        let pick = |buf: &[f64]| buf.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).map(|(i, _)| i);
        if let Some(i) = pick(&eg.diffuse) {
            let mut p = env.clone();
            let mut m = env.clone();
            p.diffuse.data_mut()[i] += h;
            m.diffuse.data_mut()[i] -= h;
            worst = worst.max(relative_error(eg.diffuse[i], (f(&mat, &p) - f(&mat, &m)) / (2.0 * h), 1e-10));
        }
        for (lvl, buf) in eg.specular.iter().enumerate() {
            if let Some(i) = pick(buf).filter(|&i| buf[i] != 0.0) {
                let mut p = env.clone();
                let mut m = env.clone();
                p.specular[lvl].map.data_mut()[i] += h;
                m.specular[lvl].map.data_mut()[i] -= h;
                worst = worst.max(relative_error(buf[i], (f(&mat, &p) - f(&mat, &m)) / (2.0 * h), 1e-10));
            }
        }
    }
    Ok(worst)
}

/// Small scene, camera, target and prefilter for full-chain checks.
pub struct ChainFixture {
    pub scene: Vec<GaussianPoint>,
    pub camera: Camera,
    pub target: Image,
    pub raw_env: CubeMap,
    pub prefilter: EnvPrefilter,
    pub cfg: FitConfig,
}

impl ChainFixture {
    /// `points` disks in front of a `size x size` camera; targets come from
    /// perturbed materials so the loss is away from its minimum.
    pub fn new(points: usize, size: usize, seed: u64, lut: &BrdfLut) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = 8;
        let settings = PrefilterSettings { samples: 256, ..PrefilterSettings::for_base(base) };
        let prefilter = EnvPrefilter::new(base, settings)?;
        // Dim enough that no pixel clips at 1.
        let raw_env = CubeMap::from_fn(base, |d| smooth_gradient_env(d) * 0.5);
        let probe = prefilter.apply(&raw_env);
        let camera = Camera::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Vec3::y(), 0.7, size, size)?;
        let mut scene = Vec::with_capacity(points);
        let mut target_scene = Vec::with_capacity(points);
        for _ in 0..points {
            let pos = Vec3::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), rng.gen_range(-0.4..0.4));
            let axis = Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), 1.0).normalize();
            let q = nalgebra::UnitQuaternion::rotation_between(&Vec3::z(), &axis).expect("axis is near +z");
            let q = q.quaternion();
            let scale = Vec3::new(rng.gen_range(0.12..0.25), rng.gen_range(0.12..0.25), 0.02);
            let r = loop {
                let r = rng.gen_range(0.15..0.85);
                if roughness_clear_of_kinks(r, lut, &probe, 1e-3) {
                    break r;
                }
            };
            let mat = MaterialParams::new(
                Rgb::from_fn(|_, _| rng.gen_range(0.1..0.6)),
                Rgb::from_fn(|_, _| rng.gen_range(0.05..0.3)),
                r,
            );
            let mut tmat = mat;
            tmat.basecolor = mat.basecolor.map(|x| (x + rng.gen_range(-0.08..0.08)).clamp(0.0, 1.0));
            let opacity = rng.gen_range(0.5..0.9);
            scene.push(GaussianPoint::new(pos, scale, [q.w, q.i, q.j, q.k], opacity, mat)?);
            target_scene.push(GaussianPoint::new(pos, scale, [q.w, q.i, q.j, q.k], opacity, tmat)?);
        }
        let cfg = FitConfig {
            env_size: base,
            prefilter_samples: 256,
            lambda_sat: 0.05,
            lambda_ec: 0.05,
            ..FitConfig::default()
        };
        let plan = BlendPlan::build(&target_scene, &camera)?;
        let blank = Image::constant(size, size, Rgb::zeros());
        let target = evaluate_view(&target_scene, &plan, &probe, &blank, lut, &cfg, 0.0, false)?.rendered;
        Ok(Self { scene, camera, target, raw_env, prefilter, cfg })
    }

    pub fn evaluate(&self, scene: &[GaussianPoint], raw: &CubeMap, lut: &BrdfLut, want_env: bool) -> Result<LossEval> {
        let plan = BlendPlan::build(scene, &self.camera)?;
        let env = self.prefilter.apply(raw);
        evaluate_view(scene, &plan, &env, &self.target, lut, &self.cfg, 0.0, want_env)
    }
}

/// Worst relative error between analytic and central-difference gradients
/// of the total loss over `params` sampled parameters (half materials,
/// half raw environment texels).
pub fn chain_gradient_error(fx: &ChainFixture, lut: &BrdfLut, params: usize, h: f64, seed: u64) -> Result<f64> {
    let eval = fx.evaluate(&fx.scene, &fx.raw_env, lut, true)?;
    let env_grad = fx.prefilter.backward(eval.env_grad.as_ref().expect("requested"), SpecularGradient::Exact);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let loss = |scene: &[GaussianPoint], raw: &CubeMap| fx.evaluate(scene, raw, lut, false).map(|e| e.total);

    let n_mat = params / 2;
    for _ in 0..n_mat {
        let i = rng.gen_range(0..fx.scene.len());
        let field = rng.gen_range(0..7);
        let get = |g: &MaterialGrad| match field {
            0..=2 => g.basecolor[field],
            3..=5 => g.specular_tint[field - 3],
            _ => g.roughness,
        };
        let set = |m: &mut MaterialParams, d: f64| match field {
            0..=2 => m.basecolor[field] += d,
            3..=5 => m.specular_tint[field - 3] += d,
            _ => m.roughness += d,
        };
        let (mut p, mut m) = (fx.scene.clone(), fx.scene.clone());
        set(&mut p[i].material, h);
        set(&mut m[i].material, -h);
        let fd = (loss(&p, &fx.raw_env)? - loss(&m, &fx.raw_env)?) / (2.0 * h);
        worst = worst.max(relative_error(get(&eval.material_grads[i]), fd, 1e-9));
    }
    // Environment texels with the largest gradients, so each one is observed.
    let mut order: Vec<usize> = (0..env_grad.len()).collect();
    order.sort_by(|&a, &b| env_grad[b].abs().total_cmp(&env_grad[a].abs()).then(a.cmp(&b)));
    for &t in order.iter().take(params - n_mat) {
        let (mut p, mut m) = (fx.raw_env.clone(), fx.raw_env.clone());
        p.data_mut()[t] += h;
        m.data_mut()[t] -= h;
        let fd = (loss(&fx.scene, &p)? - loss(&fx.scene, &m)?) / (2.0 * h);
        worst = worst.max(relative_error(env_grad[t], fd, 1e-9));
    }
    Ok(worst)
}

pub fn gradient_suite(lut: &BrdfLut) -> Result<Vec<CheckResult>> {
    let shading = shading_gradient_error(lut, 100, 1e-4, 5)?;
    let fx = ChainFixture::new(8, 16, 17, lut)?;
    let chain = chain_gradient_error(&fx, lut, 32, 1e-5, 23)?;
    Ok(vec![
        CheckResult::below("gradients", "shading b/s/r/texels, max rel error", shading, 1e-4),
        CheckResult::below("gradients", "render+loss chain (8 pts, 16x16), max rel", chain, 1e-3),
    ])
}
