//! Command-line surface. Exit codes: 0 success, 1 numerical or acceptance
//! failure, 2 usage or I/O error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::brdf::{integrate_brdf_lut, shared_lut, BrdfLut};
use crate::envmap::{cube_to_latlong, CubeMap, EnvPrefilter, PrefilterSettings};
use crate::error::{Error, Result};
use crate::fixture::{Fixture, FixtureSpec, RecoveryFixture};
use crate::image::Image;
use crate::io::{
    parse_key_values, read_cameras, read_hdr, read_lut, read_png, read_scene, write_cameras, write_hdr, write_lut,
    write_png, write_scene, FloatDump,
};
use crate::math::Rgb;
use crate::optim::{
    ablate_postprocess, ablation_csv, fit_with_envs, history_csv, metrics_csv, prefilter_hdr, FitConfig, RelightSettings,
    TrainingSet, View,
};
use crate::shading::{postprocess, PostProcessConfig, RangeMode, ShadingModel, Tonemap};
use crate::splat::{render_with_model, Camera, RenderedImage};
use crate::validate::{format_table, run_suite};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gsrelight", version, about = "Cross-environment relighting of Gaussian point clouds")]
pub struct Cli {
    /// Worker threads; falls back to RECAP_THREADS, then all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Prefilter an HDR lat-long map into diffuse and specular cube maps.
    Prefilter(PrefilterArgs),
    /// Integrate the BRDF table.
    Lut(LutArgs),
    /// Render a scene under an HDR map for every camera in a list.
    Render(RenderArgs),
    /// Fit materials and per-environment lighting to captured views.
    Fit(FitArgs),
    /// Render a fitted scene under a new HDR map.
    Relight(RelightArgs),
    /// Post-processing ablation on the toy sphere fixture.
    Ablate(AblateArgs),
    /// Run oracle suites and print a pass/fail table.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PostArgs {
    #[arg(long, default_value = "nonneg")]
    pub range: RangeMode,
    #[arg(long, default_value = "clip")]
    pub tonemap: Tonemap,
    #[arg(long, default_value = "on", value_parser = ["on", "off"])]
    pub gamma: String,
}

impl PostArgs {
    fn config(&self) -> PostProcessConfig {
        PostProcessConfig::new(self.range, self.tonemap, self.gamma == "on")
    }
}

#[derive(Debug, Args)]
pub struct PrefilterArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Cube face size of the resampled source.
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    /// Comma-separated increasing roughness values, first 0, last 1.
    #[arg(long, default_value = "0,0.2,0.4,0.6,0.8,1")]
    pub levels: String,
    #[arg(long, default_value_t = 1024)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct LutArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = BrdfLut::DEFAULT_RESOLUTION)]
    pub resolution: usize,
    #[arg(long, default_value_t = BrdfLut::DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub hdr: PathBuf,
    #[arg(long)]
    pub camera: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub post: PostArgs,
    #[arg(long, default_value_t = 32)]
    pub env_size: usize,
    #[arg(long, default_value_t = 1024)]
    pub samples: usize,
    #[arg(long, default_value = "tint")]
    pub shading: ShadingModel,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, required_unless_present = "make_fixture")]
    pub scene: Option<PathBuf>,
    /// Directory with `env<i>/cameras.txt` and `env<i>/<j>.png`.
    #[arg(long, required_unless_present = "make_fixture")]
    pub views: Option<PathBuf>,
    /// Number of environments to use (default: all in --views).
    #[arg(long)]
    pub envs: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Initialize environment i from this HDR map (repeat per environment).
    #[arg(long = "init-hdr")]
    pub init_hdr: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write a fixture (scene, views, HDR maps, config) into --out instead.
    #[arg(long)]
    pub make_fixture: bool,
    #[arg(long, default_value = "toy", value_parser = ["toy", "recovery"])]
    pub fixture: String,
}

#[derive(Debug, Args)]
pub struct RelightArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub hdr: PathBuf,
    #[arg(long)]
    pub camera: PathBuf,
    /// Output PNG; the linear dump is written beside it with extension `.f32`.
    #[arg(long)]
    pub out: PathBuf,
    /// Frame index within the camera list.
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    #[arg(long, default_value_t = 32)]
    pub env_size: usize,
    #[arg(long, default_value_t = 1024)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Fit config overrides (key = value file).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value = "all")]
    pub suite: String,
    /// Use this BRDF table dump instead of the built-in table.
    #[arg(long)]
    pub lut: Option<PathBuf>,
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    configure_threads(cli.threads);
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite(_) | Error::DegenerateCovariance(_) => EXIT_FAILURE,
        _ => EXIT_USAGE,
    }
}

fn configure_threads(flag: Option<usize>) {
    let n = flag.or_else(|| std::env::var("RECAP_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = n.filter(|&n| n > 0) {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn execute(cmd: &Command) -> Result<i32> {
    match cmd {
        Command::Prefilter(a) => cmd_prefilter(a),
        Command::Lut(a) => cmd_lut(a),
        Command::Render(a) => cmd_render(a),
        Command::Fit(a) if a.make_fixture => cmd_make_fixture(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Relight(a) => cmd_relight(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// `manifest.json` beside the outputs: enough to rerun the command.
pub fn write_manifest(dir: &Path, command: &str, seed: u64, config_text: &str) -> Result<()> {
    let manifest = serde_json::json!({
        "command": command,
        "seed": seed,
        "config_sha256": sha256_hex(config_text),
        "config": config_text,
        "version": env!("CARGO_PKG_VERSION"),
        "args": std::env::args().skip(1).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::invalid(e.to_string()))?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::at(dir))?;
    Ok(())
}

/// Faces side by side (`6 size x size`), clipped and gamma-encoded.
pub fn cube_preview(map: &CubeMap) -> Result<Image> {
    let s = map.face_size();
    let cfg = PostProcessConfig::recommended();
    let mut img = Image::constant(6 * s, s, Rgb::zeros());
    for t in 0..map.texel_count() {
        let (face, col, row) = map.texel_coords(t);
        let v = map.texel(t).map(|x| x.max(0.0));
        img.set_pixel(face.index() * s + col, row, postprocess(&v, &cfg)?);
    }
    Ok(img)
}

fn cube_dump(map: &CubeMap) -> Result<FloatDump> {
    let s = map.face_size() as u32;
    FloatDump::from_f64(vec![6, s, s, 3], map.data())
}

fn parse_levels(spec: &str, size: usize) -> Result<Vec<(f64, usize)>> {
    let rs = spec
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad level roughness '{t}'"))))
        .collect::<Result<Vec<_>>>()?;
    let floor = size.min(8);
    Ok(rs.iter().enumerate().map(|(i, &r)| (r, (size >> i.min(31)).max(floor))).collect())
}

fn cmd_prefilter(a: &PrefilterArgs) -> Result<i32> {
    let hdr = read_hdr(&a.input)?;
    if a.size < 4 {
        return Err(Error::invalid("--size must be >= 4"));
    }
    let settings = PrefilterSettings {
        levels: parse_levels(&a.levels, a.size)?,
        samples: a.samples,
        seed: a.seed,
        ..PrefilterSettings::for_base(a.size)
    };
    ensure_dir(&a.out)?;
    let cube = crate::envmap::latlong_to_cube(&hdr, a.size);
    let pre = EnvPrefilter::new(a.size, settings.clone())?.apply(&cube);
    cube_dump(&pre.diffuse)?.write(&a.out.join("diffuse.f32"))?;
    write_png(&cube_preview(&pre.diffuse)?, &a.out.join("diffuse.png"))?;
    for (i, level) in pre.specular.iter().enumerate() {
        cube_dump(&level.map)?.write(&a.out.join(format!("specular_{i}.f32")))?;
        write_png(&cube_preview(&level.map)?, &a.out.join(format!("specular_{i}.png")))?;
    }
    let config = format!("size = {}\nlevels = {:?}\nsamples = {}\nseed = {}\n", a.size, settings.levels, a.samples, a.seed);
    write_manifest(&a.out, "prefilter", a.seed, &config)?;
    Ok(EXIT_OK)
}

fn cmd_lut(a: &LutArgs) -> Result<i32> {
    let lut = integrate_brdf_lut(a.resolution, a.samples, a.seed)?;
    write_lut(&lut, &a.out)?;
    let n = lut.resolution();
    let mut preview = Image::constant(n, n, Rgb::zeros());
    for r in 0..n {
        for m in 0..n {
            let [b1, b2] = lut.node(m, r);
            preview.set_pixel(m, n - 1 - r, Rgb::new(b1.clamp(0.0, 1.0), b2.clamp(0.0, 1.0), 0.0));
        }
    }
    write_png(&preview, &a.out.with_extension("png"))?;
    let dir = a.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let config = format!("resolution = {}\nsamples = {}\nseed = {}\n", a.resolution, a.samples, a.seed);
    write_manifest(dir, "lut", a.seed, &config)?;
    Ok(EXIT_OK)
}

fn write_render(r: &RenderedImage, png: &Path) -> Result<()> {
    write_png(&r.color, png)?;
    let (w, h) = (r.linear.width() as u32, r.linear.height() as u32);
    FloatDump::from_f64(vec![h, w, 3], r.linear.data())?.write(&png.with_extension("f32"))
}

fn cmd_render(a: &RenderArgs) -> Result<i32> {
    let scene = read_scene(&a.scene)?;
    let hdr = read_hdr(&a.hdr)?;
    let cams = read_cameras(&a.camera)?;
    let post = a.post.config();
    let settings = RelightSettings { face_size: a.env_size, samples: a.samples, shading: a.shading };
    let env = prefilter_hdr(&hdr, &post, &settings)?;
    ensure_dir(&a.out)?;
    for (i, cam) in cams.iter().enumerate() {
        let r = render_with_model(&scene, cam, &env, shared_lut(), &post, a.shading)?;
        write_render(&r, &a.out.join(format!("{i:03}.png")))?;
    }
    let config = format!("postprocess = {post}\nenv_size = {}\nsamples = {}\nshading = {}\n", a.env_size, a.samples, a.shading);
    write_manifest(&a.out, "render", 0, &config)?;
    Ok(EXIT_OK)
}

fn read_fit_config(path: Option<&PathBuf>) -> Result<FitConfig> {
    match path {
        Some(p) => FitConfig::from_key_values(&parse_key_values(&fs::read_to_string(p).map_err(Error::at(p))?, p)?),
        None => Ok(FitConfig::default()),
    }
}

/// Views laid out as `env<i>/cameras.txt` plus `env<i>/<j:03>.png`.
pub fn read_views(dir: &Path, k: Option<usize>) -> Result<TrainingSet> {
    let mut envs = Vec::new();
    for i in 0.. {
        if k.is_some_and(|k| i >= k) {
            break;
        }
        let env_dir = dir.join(format!("env{i}"));
        if !env_dir.is_dir() {
            if let Some(k) = k {
                return Err(Error::invalid(format!("--envs {k} but {} is missing", env_dir.display())));
            }
            break;
        }
        let cams = read_cameras(&env_dir.join("cameras.txt"))?;
        let views = cams
            .into_iter()
            .enumerate()
            .map(|(j, camera)| Ok(View { camera, target: read_png(&env_dir.join(format!("{j:03}.png")))? }))
            .collect::<Result<Vec<_>>>()?;
        envs.push(views);
    }
    if envs.is_empty() {
        return Err(Error::invalid(format!("no env0/ directory under {}", dir.display())));
    }
    TrainingSet::new(envs)
}

pub fn write_views(dir: &Path, views: &[View]) -> Result<()> {
    ensure_dir(dir)?;
    let cams: Vec<Camera> = views.iter().map(|v| v.camera.clone()).collect();
    write_cameras(&cams, &dir.join("cameras.txt"))?;
    for (j, v) in views.iter().enumerate() {
        write_png(&v.target, &dir.join(format!("{j:03}.png")))?;
    }
    Ok(())
}

fn cmd_fit(a: &FitArgs) -> Result<i32> {
    let (Some(scene_path), Some(views_dir)) = (&a.scene, &a.views) else {
        return Err(Error::invalid("fit needs --scene and --views"));
    };
    let scene = read_scene(scene_path)?;
    let training = read_views(views_dir, a.envs)?;
    let cfg = read_fit_config(a.config.as_ref())?;
    let envs = if a.init_hdr.is_empty() {
        vec![CubeMap::constant(cfg.env_size, Rgb::repeat(cfg.env_init)); training.k()]
    } else if a.init_hdr.len() == training.k() {
        a.init_hdr
            .iter()
            .map(|p| Ok(crate::envmap::latlong_to_cube(&read_hdr(p)?, cfg.env_size)))
            .collect::<Result<Vec<_>>>()?
    } else {
        return Err(Error::invalid(format!("{} --init-hdr maps for k = {}", a.init_hdr.len(), training.k())));
    };
    let result = fit_with_envs(&scene, &training, &cfg, envs, shared_lut())?;
    ensure_dir(&a.out)?;
    write_scene(&result.scene, &a.out.join("scene.bin"))?;
    for (i, env) in result.envs.iter().enumerate() {
        cube_dump(env)?.write(&a.out.join(format!("env_{i}.f32")))?;
        write_png(&cube_preview(env)?, &a.out.join(format!("env_{i}.png")))?;
        write_hdr(&cube_to_latlong(env, 2 * env.face_size()), &a.out.join(format!("env_{i}.hdr")))?;
    }
    fs::write(a.out.join("loss.csv"), history_csv(&result.history))?;
    fs::write(a.out.join("metrics.csv"), metrics_csv(&result.metrics))?;
    let config = cfg.to_key_values();
    fs::write(a.out.join("config.txt"), &config)?;
    write_manifest(&a.out, "fit", cfg.seed, &config)?;
    Ok(EXIT_OK)
}

fn cmd_make_fixture(a: &FitArgs) -> Result<i32> {
    ensure_dir(&a.out)?;
    let hdr_dir = a.out.join("hdr");
    ensure_dir(&hdr_dir)?;
    let config = if a.fixture == "recovery" {
        let fx = RecoveryFixture::new("three_point", 32)?;
        write_scene(&fx.scene, &a.out.join("scene.bin"))?;
        write_views(&a.out.join("views").join("env0"), fx.training.views(0))?;
        write_hdr(&fx.hdr, &hdr_dir.join("train_0.hdr"))?;
        fx.fit_config()
    } else {
        let fx = Fixture::toy_sphere(FixtureSpec::default())?;
        write_scene(&fx.scene, &a.out.join("scene.bin"))?;
        for (i, (views, hdr)) in fx.train_views.iter().zip(&fx.train_hdrs).enumerate() {
            write_views(&a.out.join("views").join(format!("env{i}")), views)?;
            write_hdr(hdr, &hdr_dir.join(format!("train_{i}.hdr")))?;
        }
        write_views(&a.out.join("heldout"), &fx.heldout_views)?;
        write_hdr(&fx.heldout_hdr, &hdr_dir.join("heldout.hdr"))?;
        fx.fit_config()
    };
    let text = config.to_key_values();
    fs::write(a.out.join("config.txt"), &text)?;
    write_manifest(&a.out, "fit --make-fixture", config.seed, &text)?;
    Ok(EXIT_OK)
}

fn cmd_relight(a: &RelightArgs) -> Result<i32> {
    let scene = read_scene(&a.scene)?;
    let hdr = read_hdr(&a.hdr)?;
    let cams = read_cameras(&a.camera)?;
    let cam = cams
        .get(a.frame)
        .ok_or_else(|| Error::invalid(format!("frame {} not in a list of {}", a.frame, cams.len())))?;
    let post = PostProcessConfig::recommended();
    let settings = RelightSettings { face_size: a.env_size, samples: a.samples, ..RelightSettings::default() };
    let r = crate::optim::relight(&scene, &hdr, cam, shared_lut(), &post, &settings)?;
    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_render(&r, &a.out)?;
    Ok(EXIT_OK)
}

fn cmd_ablate(a: &AblateArgs) -> Result<i32> {
    let fx = Fixture::toy_sphere(FixtureSpec::default())?;
    let mut cfg = match &a.config {
        Some(p) => {
            let mut kv: std::collections::BTreeMap<String, String> = parse_key_values(&fx.fit_config().to_key_values(), p)?;
            kv.extend(parse_key_values(&fs::read_to_string(p).map_err(Error::at(p))?, p)?);
            FitConfig::from_key_values(&kv)?
        }
        None => fx.fit_config(),
    };
    if let Some(n) = a.iterations {
        cfg.iterations = n;
    }
    let rows = ablate_postprocess(
        &fx.scene,
        &fx.training(2)?,
        &fx.heldout_hdr,
        &fx.heldout_views,
        &cfg,
        &PostProcessConfig::ablation_rows(),
    )?;
    ensure_dir(&a.out)?;
    let csv = ablation_csv(&rows);
    print!("{csv}");
    fs::write(a.out.join("ablation.csv"), csv)?;
    let text = cfg.to_key_values();
    write_manifest(&a.out, "ablate", cfg.seed, &text)?;
    Ok(EXIT_OK)
}

fn cmd_validate(a: &ValidateArgs) -> Result<i32> {
    let custom;
    let lut = match &a.lut {
        Some(p) => {
            custom = read_lut(p)?;
            &custom
        }
        None => shared_lut(),
    };
    let results = run_suite(&a.suite, lut)?;
    print!("{}", format_table(&results));
    Ok(if results.iter().all(|r| r.passed) { EXIT_OK } else { EXIT_FAILURE })
}
