use std::fmt::Write as _;

use super::fit::{fit, prefilter_settings, FitConfig, TrainingSet, View};
use super::metrics::{metrics_psnr, metrics_ssim};
use crate::brdf::BrdfLut;
use crate::envmap::{latlong_to_cube, shared_prefilter, LatLongImage, PrefilteredEnv};
use crate::error::{Error, Result};
use crate::shading::{preprocess_hdr_for_config, PostProcessConfig, ShadingModel};
use crate::splat::{render_with_model, Camera, GaussianPoint, RenderedImage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelightSettings {
    /// Cube face size the lat-long map is resampled to.
    pub face_size: usize,
    pub samples: usize,
    pub shading: ShadingModel,
}

impl Default for RelightSettings {
    fn default() -> Self {
        Self { face_size: 32, samples: 1024, shading: ShadingModel::SpecularTint }
    }
}

impl RelightSettings {
    pub fn matching(cfg: &FitConfig) -> Self {
        Self { face_size: cfg.env_size, samples: cfg.prefilter_samples, shading: cfg.shading }
    }
}

/// Resample, range-preprocess and prefilter an HDR lat-long map.
pub fn prefilter_hdr(hdr: &LatLongImage, cfg: &PostProcessConfig, settings: &RelightSettings) -> Result<PrefilteredEnv> {
    if hdr.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("environment map contains non-finite texels".into()));
    }
    let cube = preprocess_hdr_for_config(&latlong_to_cube(hdr, settings.face_size), cfg);
    let pre = shared_prefilter(settings.face_size, &prefilter_settings(settings.face_size, settings.samples))?;
    Ok(pre.apply(&cube))
}

/// Render fitted materials under a new HDR environment.
pub fn relight(
    scene: &[GaussianPoint],
    hdr: &LatLongImage,
    cam: &Camera,
    lut: &BrdfLut,
    cfg: &PostProcessConfig,
    settings: &RelightSettings,
) -> Result<RenderedImage> {
    let env = prefilter_hdr(hdr, cfg, settings)?;
    render_with_model(scene, cam, &env, lut, cfg, settings.shading)
}

/// [`relight`] for several cameras sharing one prefiltered environment.
pub fn relight_views(
    scene: &[GaussianPoint],
    hdr: &LatLongImage,
    cams: &[Camera],
    lut: &BrdfLut,
    cfg: &PostProcessConfig,
    settings: &RelightSettings,
) -> Result<Vec<RenderedImage>> {
    let env = prefilter_hdr(hdr, cfg, settings)?;
    cams.iter().map(|c| render_with_model(scene, c, &env, lut, cfg, settings.shading)).collect()
}

/// Mean PSNR and SSIM of relit renders against reference views.
pub fn relight_metrics(
    scene: &[GaussianPoint],
    hdr: &LatLongImage,
    reference: &[View],
    lut: &BrdfLut,
    cfg: &PostProcessConfig,
    settings: &RelightSettings,
) -> Result<(f64, f64)> {
    if reference.is_empty() {
        return Err(Error::invalid("no reference views"));
    }
    let cams: Vec<Camera> = reference.iter().map(|v| v.camera.clone()).collect();
    let renders = relight_views(scene, hdr, &cams, lut, cfg, settings)?;
    let (mut psnr, mut ssim) = (0.0, 0.0);
    for (r, v) in renders.iter().zip(reference) {
        psnr += metrics_psnr(&r.color, &v.target)?;
        ssim += metrics_ssim(&r.color, &v.target)?;
    }
    let n = reference.len() as f64;
    Ok((psnr / n, ssim / n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub config: PostProcessConfig,
    /// Mean PSNR over training views after the fit.
    pub train_psnr: f64,
    pub relight_psnr: f64,
    pub relight_ssim: f64,
}

/// Fit once per post-processing configuration and score relighting under
/// a held-out environment. The config under test is used both while
/// fitting and when relighting.
pub fn ablate_postprocess(
    scene: &[GaussianPoint],
    training: &TrainingSet,
    heldout_hdr: &LatLongImage,
    heldout_views: &[View],
    base: &FitConfig,
    rows: &[PostProcessConfig],
) -> Result<Vec<AblationRow>> {
    let lut = crate::brdf::shared_lut();
    rows.iter()
        .map(|row| {
            let cfg = FitConfig { postprocess: *row, ..base.clone() };
            let result = fit(scene, training, &cfg)?;
            let train_psnr = result.metrics.iter().map(|m| m.psnr).sum::<f64>() / result.metrics.len() as f64;
            let (relight_psnr, relight_ssim) =
                relight_metrics(&result.scene, heldout_hdr, heldout_views, lut, row, &RelightSettings::matching(&cfg))?;
            Ok(AblationRow { config: *row, train_psnr, relight_psnr, relight_ssim })
        })
        .collect()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("range,tonemap,gamma,train_psnr,relight_psnr,relight_ssim\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:?},{:?},{:?}",
            r.config.range,
            r.config.tonemap,
            if r.config.gamma { "on" } else { "off" },
            r.train_psnr,
            r.relight_psnr,
            r.relight_ssim
        );
    }
    s
}
