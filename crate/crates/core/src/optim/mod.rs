//! Joint optimization of materials and per-environment lighting, plus
//! relighting under new HDR maps.

mod adam;
mod fit;
mod metrics;
mod relight;

pub use adam::{adam_step, AdamState};
pub use fit::{
    evaluate_view, fit, fit_with_envs, history_csv, metrics_csv, prefilter_settings, EnvMetrics,
    FitConfig, FitResult, LossEval, LossRecord, TrainingSet, View,
};
pub use metrics::{image_loss, image_loss_grad, metrics_psnr, metrics_ssim, SSIM_WEIGHT};
pub use relight::{
    ablate_postprocess, ablation_csv, prefilter_hdr, relight, relight_metrics, relight_views,
    AblationRow, RelightSettings,
};
