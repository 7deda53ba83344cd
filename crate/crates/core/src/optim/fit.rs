use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use super::adam::{adam_step, AdamState};
use super::metrics::{image_loss, image_loss_grad, metrics_psnr, metrics_ssim};
use crate::brdf::BrdfLut;
use crate::envmap::{
    CubeMap, PrefilterSettings, PrefilteredEnv, PrefilteredGrad, SpecularGradient,
};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{gray, Rgb};
use crate::shading::{
    loss_energy, loss_energy_grad, loss_sat, loss_sat_grad, postprocess_with_derivative,
    MaterialGrad, MaterialParams, PostProcessConfig, RangeMode, ShadingModel,
};
use crate::splat::{depth_normal_from_plan, shade_points, BlendPlan, Camera, GaussianPoint};

/// One training image and the camera that took it.
#[derive(Debug, Clone)]
pub struct View {
    pub camera: Camera,
    pub target: Image,
}

/// Views grouped by the environment they were captured under.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    envs: Vec<Vec<View>>,
}

impl TrainingSet {
    pub fn new(envs: Vec<Vec<View>>) -> Result<Self> {
        if envs.is_empty() || envs.iter().any(|v| v.is_empty()) {
            return Err(Error::invalid("training set needs k >= 1 environments, each with views"));
        }
        let first = &envs[0][0].target;
        for v in envs.iter().flatten() {
            if !v.target.same_shape(first) {
                return Err(Error::invalid("training targets must share one resolution"));
            }
            if v.camera.width != v.target.width() || v.camera.height != v.target.height() {
                return Err(Error::invalid("camera size does not match its target"));
            }
        }
        Ok(Self { envs })
    }

    pub fn k(&self) -> usize {
        self.envs.len()
    }

    pub fn views(&self, env: usize) -> &[View] {
        &self.envs[env]
    }

    pub fn environments(&self) -> &[Vec<View>] {
        &self.envs
    }

    /// Round-robin over environments; views cycle within each.
    pub fn schedule(&self, iteration: usize) -> (usize, usize) {
        let k = self.k();
        let e = iteration % k;
        (e, (iteration / k) % self.envs[e].len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub iterations: usize,
    pub lr_material: f64,
    pub lr_env: f64,
    /// Learning-rate multiplier reached at the last iteration (geometric decay).
    pub lr_decay: f64,
    pub lambda_sat: f64,
    pub lambda_ec: f64,
    pub lambda_dn: f64,
    pub postprocess: PostProcessConfig,
    /// Prefiltered maps are rebuilt after this many steps of their environment.
    pub cadence: usize,
    pub seed: u64,
    pub env_size: usize,
    pub env_init: f64,
    pub prefilter_samples: usize,
    pub optimize_materials: bool,
    pub optimize_envs: bool,
    pub shading: ShadingModel,
    pub specular_gradient: SpecularGradient,
    /// Half-width of the seeded uniform jitter added to initial materials.
    pub init_jitter: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            lr_material: 0.01,
            lr_env: 0.05,
            lr_decay: 0.1,
            lambda_sat: 0.01,
            lambda_ec: 0.01,
            lambda_dn: 0.01,
            postprocess: PostProcessConfig::recommended(),
            cadence: 8,
            seed: 0,
            env_size: 32,
            env_init: 0.5,
            prefilter_samples: 1024,
            optimize_materials: true,
            optimize_envs: true,
            shading: ShadingModel::SpecularTint,
            specular_gradient: SpecularGradient::Exact,
            init_jitter: 0.02,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "1" | "yes" => Ok(true),
        "false" | "off" | "0" | "no" => Ok(false),
        _ => Err(Error::invalid(format!("{key}: expected a boolean, got '{v}'"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::invalid(format!("{key}: cannot parse '{v}'")))
}

impl FitConfig {
    pub const KEYS: [&'static str; 20] = [
        "iterations",
        "lr_material",
        "lr_env",
        "lr_decay",
        "lambda_sat",
        "lambda_ec",
        "lambda_dn",
        "range",
        "tonemap",
        "gamma",
        "cadence",
        "seed",
        "env_size",
        "env_init",
        "prefilter_samples",
        "optimize_materials",
        "optimize_envs",
        "shading",
        "specular_gradient",
        "init_jitter",
    ];

    /// Override defaults from flat key-value pairs; unknown keys are errors.
    pub fn from_key_values(kv: &BTreeMap<String, String>) -> Result<Self> {
        let mut c = Self::default();
        for (k, v) in kv {
            let v = v.as_str();
            match k.as_str() {
                "iterations" => c.iterations = parse_num(k, v)?,
                "lr_material" => c.lr_material = parse_num(k, v)?,
                "lr_env" => c.lr_env = parse_num(k, v)?,
                "lr_decay" => c.lr_decay = parse_num(k, v)?,
                "lambda_sat" => c.lambda_sat = parse_num(k, v)?,
                "lambda_ec" => c.lambda_ec = parse_num(k, v)?,
                "lambda_dn" => c.lambda_dn = parse_num(k, v)?,
                "range" => c.postprocess.range = v.parse()?,
                "tonemap" => c.postprocess.tonemap = v.parse()?,
                "gamma" => c.postprocess.gamma = parse_bool(k, v)?,
                "cadence" => c.cadence = parse_num(k, v)?,
                "seed" => c.seed = parse_num(k, v)?,
                "env_size" => c.env_size = parse_num(k, v)?,
                "env_init" => c.env_init = parse_num(k, v)?,
                "prefilter_samples" => c.prefilter_samples = parse_num(k, v)?,
                "optimize_materials" => c.optimize_materials = parse_bool(k, v)?,
                "optimize_envs" => c.optimize_envs = parse_bool(k, v)?,
                "shading" => c.shading = v.parse()?,
                "specular_gradient" => {
                    c.specular_gradient = match v {
                        "exact" => SpecularGradient::Exact,
                        "straight" | "straight-through" => SpecularGradient::StraightThrough,
                        _ => return Err(Error::invalid(format!("specular_gradient: unknown '{v}'"))),
                    }
                }
                "init_jitter" => c.init_jitter = parse_num(k, v)?,
                _ => return Err(Error::invalid(format!("unknown config key '{k}'"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Canonical `key = value` text covering every field.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let sg = match self.specular_gradient {
            SpecularGradient::Exact => "exact",
            SpecularGradient::StraightThrough => "straight",
        };
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "lr_material = {:?}", self.lr_material);
        let _ = writeln!(s, "lr_env = {:?}", self.lr_env);
        let _ = writeln!(s, "lr_decay = {:?}", self.lr_decay);
        let _ = writeln!(s, "lambda_sat = {:?}", self.lambda_sat);
        let _ = writeln!(s, "lambda_ec = {:?}", self.lambda_ec);
        let _ = writeln!(s, "lambda_dn = {:?}", self.lambda_dn);
        let _ = writeln!(s, "range = {}", self.postprocess.range);
        let _ = writeln!(s, "tonemap = {}", self.postprocess.tonemap);
        let _ = writeln!(s, "gamma = {}", if self.postprocess.gamma { "on" } else { "off" });
        let _ = writeln!(s, "cadence = {}", self.cadence);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "env_size = {}", self.env_size);
        let _ = writeln!(s, "env_init = {:?}", self.env_init);
        let _ = writeln!(s, "prefilter_samples = {}", self.prefilter_samples);
        let _ = writeln!(s, "optimize_materials = {}", self.optimize_materials);
        let _ = writeln!(s, "optimize_envs = {}", self.optimize_envs);
        let _ = writeln!(s, "shading = {}", self.shading);
        let _ = writeln!(s, "specular_gradient = {sg}");
        let _ = writeln!(s, "init_jitter = {:?}", self.init_jitter);
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be > 0"));
        }
        if !(self.lr_material > 0.0 && self.lr_env > 0.0) {
            return Err(Error::invalid("learning rates must be > 0"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::invalid("lr_decay must be in (0, 1]"));
        }
        if self.cadence == 0 {
            return Err(Error::invalid("cadence must be >= 1"));
        }
        if [self.lambda_sat, self.lambda_ec, self.lambda_dn].iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::invalid("regularizer weights must be >= 0"));
        }
        if self.env_size < 4 || !(self.env_init >= 0.0) {
            return Err(Error::invalid("env_size must be >= 4 and env_init >= 0"));
        }
        if self.prefilter_samples == 0 || !(self.init_jitter >= 0.0) {
            return Err(Error::invalid("prefilter_samples must be >= 1 and init_jitter >= 0"));
        }
        Ok(())
    }

    pub fn prefilter_settings(&self) -> PrefilterSettings {
        prefilter_settings(self.env_size, self.prefilter_samples)
    }

    fn lr_scale(&self, it: usize) -> f64 {
        if self.iterations <= 1 {
            return 1.0;
        }
        self.lr_decay.powf(it as f64 / (self.iterations - 1) as f64)
    }
}

/// Prefilter settings shared by fitting, fixtures and relighting. The
/// sample seed is fixed so every consumer sees the same operator.
pub fn prefilter_settings(env_size: usize, samples: usize) -> PrefilterSettings {
    PrefilterSettings { samples, seed: 0, ..PrefilterSettings::for_base(env_size) }
}

/// One row of the loss history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub env: usize,
    pub view: usize,
    pub image: f64,
    pub sat: f64,
    pub energy: f64,
    pub depth_normal: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvMetrics {
    pub env: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub image_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub scene: Vec<GaussianPoint>,
    pub envs: Vec<CubeMap>,
    pub history: Vec<LossRecord>,
    pub metrics: Vec<EnvMetrics>,
}

/// Loss terms and gradients for one rendered view.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub image: f64,
    pub sat: f64,
    pub energy: f64,
    pub depth_normal: f64,
    pub total: f64,
    pub material_grads: Vec<MaterialGrad>,
    /// Gradient on prefiltered texels; `None` when not requested.
    pub env_grad: Option<PrefilteredGrad>,
    pub rendered: Image,
}

/// Total loss `image + sat + energy + depth_normal` for one view and its
/// gradients with respect to materials and (optionally) prefiltered texels.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_view(
    scene: &[GaussianPoint],
    plan: &BlendPlan,
    env: &PrefilteredEnv,
    target: &Image,
    lut: &BrdfLut,
    cfg: &FitConfig,
    depth_normal: f64,
    want_env_grad: bool,
) -> Result<LossEval> {
    let shading = shade_points(scene, plan, env, lut, cfg.shading);
    let linear = plan.composite(&shading.colors);
    let (display, deriv): (Vec<Rgb>, Vec<Rgb>) =
        linear.par_iter().map(|l| postprocess_with_derivative(l, &cfg.postprocess)).unzip();
    let rendered = Image::from_pixels(plan.width, plan.height, &display)?;
    let (image, g) = image_loss_grad(&rendered, target)?;
    let pixel_grads: Vec<Rgb> = deriv
        .iter()
        .enumerate()
        .map(|(p, d)| Rgb::new(g[3 * p], g[3 * p + 1], g[3 * p + 2]).component_mul(d))
        .collect();
    let point_grads = plan.splat_gradient(&pixel_grads);

    let n = scene.len() as f64;
    let mut env_grad = want_env_grad.then(|| PrefilteredGrad::zeros_like(env));
    let mut material_grads = vec![MaterialGrad::default(); scene.len()];
    let (mut sat, mut energy) = (0.0, 0.0);
    for (i, p) in scene.iter().enumerate() {
        let m = &p.material;
        shading.queries[i].backward(cfg.shading, m, &point_grads[i], &mut material_grads[i], env_grad.as_mut());
        sat += loss_sat(&m.specular_tint, cfg.lambda_sat) / n;
        energy += loss_energy(&m.specular_tint, &m.basecolor, cfg.lambda_ec) / n;
        let gs = loss_sat_grad(&m.specular_tint, cfg.lambda_sat) / n;
        let (es, eb) = loss_energy_grad(&m.specular_tint, &m.basecolor, cfg.lambda_ec);
        material_grads[i].specular_tint += gs + es / n;
        material_grads[i].basecolor += eb / n;
    }
    let total = image + sat + energy + depth_normal;
    Ok(LossEval { image, sat, energy, depth_normal, total, material_grads, env_grad, rendered })
}

fn initial_material(seed: u64, index: usize, jitter: f64) -> MaterialParams {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut j = || if jitter > 0.0 { rng.gen_range(-jitter..=jitter) } else { 0.0 };
    let mut m = MaterialParams {
        basecolor: Rgb::new(0.4 + j(), 0.4 + j(), 0.4 + j()),
        specular_tint: gray(0.1 + j()),
        roughness: 0.5 + j(),
        metallic: 0.0,
    };
    m.project();
    m
}

const MATERIAL_DOF: usize = 8;

fn pack(scene: &[GaussianPoint]) -> Vec<f64> {
    scene
        .iter()
        .flat_map(|p| {
            let m = &p.material;
            let (b, s) = (m.basecolor, m.specular_tint);
            [b.x, b.y, b.z, s.x, s.y, s.z, m.roughness, m.metallic]
        })
        .collect()
}

fn unpack(scene: &mut [GaussianPoint], v: &[f64]) {
    for (p, c) in scene.iter_mut().zip(v.chunks(MATERIAL_DOF)) {
        let m = &mut p.material;
        m.basecolor = Rgb::new(c[0], c[1], c[2]);
        m.specular_tint = Rgb::new(c[3], c[4], c[5]);
        m.roughness = c[6];
        m.metallic = c[7];
        m.project();
    }
}

fn pack_grads(g: &[MaterialGrad]) -> Vec<f64> {
    g.iter()
        .flat_map(|g| {
            let (b, s) = (g.basecolor, g.specular_tint);
            [b.x, b.y, b.z, s.x, s.y, s.z, g.roughness, g.metallic]
        })
        .collect()
}

fn project_env(map: &mut CubeMap, range: RangeMode) {
    match range {
        RangeMode::Unit => map.project_unit(),
        RangeMode::NonNegative => map.project_nonnegative(),
    }
}

/// Joint fit with every environment initialized to `cfg.env_init`.
pub fn fit(scene: &[GaussianPoint], training: &TrainingSet, cfg: &FitConfig) -> Result<FitResult> {
    let envs = vec![CubeMap::constant(cfg.env_size, gray(cfg.env_init)); training.k()];
    fit_with_envs(scene, training, cfg, envs, crate::brdf::shared_lut())
}

/// Joint fit starting from the given raw environments (one per training
/// environment, each `cfg.env_size` per face).
pub fn fit_with_envs(
    scene: &[GaussianPoint],
    training: &TrainingSet,
    cfg: &FitConfig,
    mut envs: Vec<CubeMap>,
    lut: &BrdfLut,
) -> Result<FitResult> {
    cfg.validate()?;
    if envs.len() != training.k() {
        return Err(Error::invalid(format!("{} initial envs for k = {}", envs.len(), training.k())));
    }
    if envs.iter().any(|e| e.face_size() != cfg.env_size) {
        return Err(Error::invalid("initial env face size differs from env_size"));
    }
    let mut scene = scene.to_vec();
    if cfg.optimize_materials {
        for (i, p) in scene.iter_mut().enumerate() {
            p.material = initial_material(cfg.seed, i, cfg.init_jitter);
        }
    }
    for e in envs.iter_mut() {
        project_env(e, cfg.postprocess.range);
    }
    let prefilter = crate::envmap::shared_prefilter(cfg.env_size, &cfg.prefilter_settings())?;
    let mut pre: Vec<PrefilteredEnv> = envs.iter().map(|e| prefilter.apply(e)).collect();

    let plans: Vec<Vec<BlendPlan>> = training
        .environments()
        .iter()
        .map(|views| views.iter().map(|v| BlendPlan::build(&scene, &v.camera)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let dn: Vec<Vec<f64>> = training
        .environments()
        .iter()
        .zip(&plans)
        .map(|(views, ps)| {
            views.iter().zip(ps).map(|(v, p)| depth_normal_from_plan(p, &v.camera, cfg.lambda_dn)).collect()
        })
        .collect();

    let mut params = pack(&scene);
    let mut mat_state = AdamState::new(params.len());
    let mut env_states: Vec<AdamState> = envs.iter().map(|e| AdamState::new(e.data().len())).collect();
    let mut env_steps = vec![0usize; envs.len()];
    let mut history = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let (e, j) = training.schedule(it);
        let view = &training.views(e)[j];
        let eval = evaluate_view(&scene, &plans[e][j], &pre[e], &view.target, lut, cfg, dn[e][j], cfg.optimize_envs)?;
        if !eval.total.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss diverged at iteration {it} (env {e}, view {j}): image {} sat {} energy {}",
                eval.image, eval.sat, eval.energy
            )));
        }
        history.push(LossRecord {
            iteration: it,
            env: e,
            view: j,
            image: eval.image,
            sat: eval.sat,
            energy: eval.energy,
            depth_normal: eval.depth_normal,
            total: eval.total,
        });
        let scale = cfg.lr_scale(it);
        if cfg.optimize_materials {
            let g = pack_grads(&eval.material_grads);
            adam_step(&mut params, &g, &mut mat_state, cfg.lr_material * scale)
                .map_err(|err| Error::NonFinite(format!("iteration {it}: {err}")))?;
            unpack(&mut scene, &params);
            params = pack(&scene);
        }
        if let Some(env_grad) = eval.env_grad.as_ref() {
            let raw_grad = prefilter.backward(env_grad, cfg.specular_gradient);
            adam_step(envs[e].data_mut(), &raw_grad, &mut env_states[e], cfg.lr_env * scale)
                .map_err(|err| Error::NonFinite(format!("iteration {it}: {err}")))?;
            project_env(&mut envs[e], cfg.postprocess.range);
            env_steps[e] += 1;
            if env_steps[e].is_multiple_of(cfg.cadence) {
                pre[e] = prefilter.apply(&envs[e]);
            }
        }
    }

    let pre: Vec<PrefilteredEnv> = envs.iter().map(|e| prefilter.apply(e)).collect();
    let mut metrics = Vec::with_capacity(envs.len());
    for (e, views) in training.environments().iter().enumerate() {
        let (mut psnr, mut ssim, mut loss) = (0.0, 0.0, 0.0);
        for (v, plan) in views.iter().zip(&plans[e]) {
            let shading = shade_points(&scene, plan, &pre[e], lut, cfg.shading);
            let linear = plan.composite(&shading.colors);
            let display: Vec<Rgb> = linear.iter().map(|l| postprocess_with_derivative(l, &cfg.postprocess).0).collect();
            let img = Image::from_pixels(plan.width, plan.height, &display)?;
            psnr += metrics_psnr(&img, &v.target)?;
            ssim += metrics_ssim(&img, &v.target)?;
            loss += image_loss(&img, &v.target)?;
        }
        let n = views.len() as f64;
        metrics.push(EnvMetrics { env: e, psnr: psnr / n, ssim: ssim / n, image_loss: loss / n });
    }
    Ok(FitResult { scene, envs, history, metrics })
}

/// Loss history as CSV rows `iteration,term,value`.
pub fn history_csv(history: &[LossRecord]) -> String {
    let mut s = String::from("iteration,term,value\n");
    for r in history {
        for (term, v) in [
            ("image", r.image),
            ("sat", r.sat),
            ("energy", r.energy),
            ("depth_normal", r.depth_normal),
            ("total", r.total),
        ] {
            let _ = writeln!(s, "{},{term},{v:?}", r.iteration);
        }
    }
    s
}

pub fn metrics_csv(metrics: &[EnvMetrics]) -> String {
    let mut s = String::from("env,psnr,ssim,image_loss\n");
    for m in metrics {
        let _ = writeln!(s, "{},{:?},{:?},{:?}", m.env, m.psnr, m.ssim, m.image_loss);
    }
    s
}
