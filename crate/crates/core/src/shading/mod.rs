//! Split-sum shading of a surface point under a prefiltered environment.
//!
//! Two models share the same lookups:
//!
//! * specular tint: `L = E_s s beta1 + E_s beta2 + E_d b`
//! * metallic blend: `L = E_d (1 - m) b + E_s (F0 beta1 + beta2)` with
//!   `F0 = m b + (1 - m) 0.04`
//!
//! `E_d` is read at the normal, `E_s` at the mirror direction with the
//! point's roughness, and `(beta1, beta2)` from the BRDF table at `(n.v, r)`.

mod loss;
mod postprocess;

pub use loss::{loss_energy, loss_energy_grad, loss_sat, loss_sat_grad, RegularizerWeights};
pub(crate) use postprocess::postprocess_with_derivative;
pub use postprocess::{
    postprocess, postprocess_derivative, preprocess_hdr_for_config, PostProcessConfig, RangeMode,
    Tonemap,
};

use std::fmt;
use std::str::FromStr;

use crate::brdf::lut::MIN_COS_VIEW;
use crate::brdf::{BrdfLut, LutSample, DIELECTRIC_F0};
use crate::envmap::{Bracket, PrefilteredEnv, PrefilteredGrad, Taps};
use crate::error::{Error, Result};
use crate::math::{reflect, Rgb, Vec3};

/// Per-point reflectance attributes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub basecolor: Rgb,
    pub specular_tint: Rgb,
    pub roughness: f64,
    /// Only read by the metallic-blend model.
    pub metallic: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            basecolor: Rgb::repeat(0.5),
            specular_tint: Rgb::repeat(0.1),
            roughness: 0.5,
            metallic: 0.0,
        }
    }
}

impl MaterialParams {
    pub fn new(basecolor: Rgb, specular_tint: Rgb, roughness: f64) -> Self {
        Self { basecolor, specular_tint, roughness, metallic: 0.0 }
    }

    /// Clamp every field into its valid range.
    pub fn project(&mut self) {
        let unit = |x: f64| if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
        self.basecolor = self.basecolor.map(unit);
        self.specular_tint = self.specular_tint.map(unit);
        self.roughness = unit(self.roughness);
        self.metallic = unit(self.metallic);
    }

    pub fn is_valid(&self) -> bool {
        let ok = |x: f64| (0.0..=1.0).contains(&x);
        self.basecolor.iter().all(|&x| ok(x))
            && self.specular_tint.iter().all(|&x| ok(x))
            && ok(self.roughness)
            && ok(self.metallic)
    }
}

/// Gradient with respect to the fields of [`MaterialParams`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MaterialGrad {
    pub basecolor: Rgb,
    pub specular_tint: Rgb,
    pub roughness: f64,
    pub metallic: f64,
}

impl MaterialGrad {
    pub fn add(&mut self, o: &MaterialGrad) {
        self.basecolor += o.basecolor;
        self.specular_tint += o.specular_tint;
        self.roughness += o.roughness;
        self.metallic += o.metallic;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShadingModel {
    #[default]
    SpecularTint,
    MetallicBlend,
}

impl fmt::Display for ShadingModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShadingModel::SpecularTint => "tint",
            ShadingModel::MetallicBlend => "metallic",
        })
    }
}

impl FromStr for ShadingModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tint" | "proposed" => Ok(ShadingModel::SpecularTint),
            "metallic" | "blend" => Ok(ShadingModel::MetallicBlend),
            _ => Err(Error::invalid(format!("unknown shading model '{s}'"))),
        }
    }
}

/// Environment and table lookups for one `(n, v, roughness)` triple, kept so
/// the backward pass can reuse the taps.
#[derive(Debug, Clone)]
pub struct ShadingQuery {
    pub n_dot_v: f64,
    pub reflected: Vec3,
    pub e_d: Rgb,
    pub e_s: Rgb,
    e_lo: Rgb,
    e_hi: Rgb,
    bracket: Bracket,
    diffuse_taps: Taps,
    lo_taps: Taps,
    hi_taps: Taps,
    pub lut: LutSample,
}

impl ShadingQuery {
    pub fn new(n: &Vec3, v: &Vec3, roughness: f64, env: &PrefilteredEnv, lut: &BrdfLut) -> Self {
        let raw_nv = n.dot(v);
        if cfg!(debug_assertions) && raw_nv < MIN_COS_VIEW {
            log::debug!("n.v = {raw_nv} clamped to {MIN_COS_VIEW}");
        }
        let n_dot_v = raw_nv.max(MIN_COS_VIEW);
        let reflected = reflect(&(-v), n).normalize();
        let diffuse_taps = env.diffuse.taps(n);
        let e_d = env.diffuse.gather(&diffuse_taps);
        let bracket = env.specular_bracket(roughness);
        let lo_taps = env.specular[bracket.lo].map.taps(&reflected);
        let hi_taps = env.specular[bracket.hi].map.taps(&reflected);
        let e_lo = env.specular[bracket.lo].map.gather(&lo_taps);
        let e_hi = env.specular[bracket.hi].map.gather(&hi_taps);
        let e_s = if bracket.t == 0.0 { e_lo } else { e_lo * (1.0 - bracket.t) + e_hi * bracket.t };
        let lut = lut.sample(n_dot_v, roughness);
        Self { n_dot_v, reflected, e_d, e_s, e_lo, e_hi, bracket, diffuse_taps, lo_taps, hi_taps, lut }
    }

    fn de_s_dr(&self) -> Rgb {
        (self.e_hi - self.e_lo) * self.bracket.dt_dr
    }

    fn scatter_specular(&self, grad: &mut PrefilteredGrad, g: &Rgb) {
        let t = self.bracket.t;
        if t != 1.0 {
            PrefilteredGrad::scatter(&mut grad.specular[self.bracket.lo], &self.lo_taps, &(g * (1.0 - t)));
        }
        if t != 0.0 {
            PrefilteredGrad::scatter(&mut grad.specular[self.bracket.hi], &self.hi_taps, &(g * t));
        }
    }

    /// Specular-tint radiance.
    pub fn tint_radiance(&self, mat: &MaterialParams) -> Rgb {
        let (b1, b2) = (self.lut.beta1, self.lut.beta2);
        let spec = self.e_s.component_mul(&mat.specular_tint) * b1 + self.e_s * b2;
        (spec + self.e_d.component_mul(&mat.basecolor)).map(|x| x.max(0.0))
    }

    pub fn tint_backward(
        &self,
        mat: &MaterialParams,
        upstream: &Rgb,
        grad: &mut MaterialGrad,
        env_grad: Option<&mut PrefilteredGrad>,
    ) {
        let (b1, b2) = (self.lut.beta1, self.lut.beta2);
        grad.basecolor += upstream.component_mul(&self.e_d);
        grad.specular_tint += upstream.component_mul(&self.e_s) * b1;
        let scale = mat.specular_tint * b1 + Rgb::repeat(b2);
        let dscale = mat.specular_tint * self.lut.dbeta1_dr + Rgb::repeat(self.lut.dbeta2_dr);
        grad.roughness += upstream.dot(
            &(self.de_s_dr().component_mul(&scale) + self.e_s.component_mul(&dscale)),
        );
        if let Some(env_grad) = env_grad {
            let gd = upstream.component_mul(&mat.basecolor);
            PrefilteredGrad::scatter(&mut env_grad.diffuse, &self.diffuse_taps, &gd);
            self.scatter_specular(env_grad, &upstream.component_mul(&scale));
        }
    }

    /// Metallic-blend radiance.
    pub fn blend_radiance(&self, mat: &MaterialParams) -> Rgb {
        let m = mat.metallic;
        let (b1, b2) = (self.lut.beta1, self.lut.beta2);
        let f0 = mat.basecolor * m + Rgb::repeat((1.0 - m) * DIELECTRIC_F0);
        let diffuse = self.e_d.component_mul(&mat.basecolor) * (1.0 - m);
        let specular = self.e_s.component_mul(&(f0 * b1 + Rgb::repeat(b2)));
        (diffuse + specular).map(|x| x.max(0.0))
    }

    pub fn blend_backward(
        &self,
        mat: &MaterialParams,
        upstream: &Rgb,
        grad: &mut MaterialGrad,
        env_grad: Option<&mut PrefilteredGrad>,
    ) {
        let m = mat.metallic;
        let (b1, b2) = (self.lut.beta1, self.lut.beta2);
        let f0 = mat.basecolor * m + Rgb::repeat((1.0 - m) * DIELECTRIC_F0);
        let scale = f0 * b1 + Rgb::repeat(b2);
        grad.basecolor += upstream.component_mul(&(self.e_d * (1.0 - m) + self.e_s * (m * b1)));
        let df0_dm = mat.basecolor - Rgb::repeat(DIELECTRIC_F0);
        grad.metallic += upstream.dot(
            &(-self.e_d.component_mul(&mat.basecolor) + self.e_s.component_mul(&df0_dm) * b1),
        );
        let dscale = f0 * self.lut.dbeta1_dr + Rgb::repeat(self.lut.dbeta2_dr);
        grad.roughness += upstream.dot(
            &(self.de_s_dr().component_mul(&scale) + self.e_s.component_mul(&dscale)),
        );
        if let Some(env_grad) = env_grad {
            let gd = upstream.component_mul(&mat.basecolor) * (1.0 - m);
            PrefilteredGrad::scatter(&mut env_grad.diffuse, &self.diffuse_taps, &gd);
            self.scatter_specular(env_grad, &upstream.component_mul(&scale));
        }
    }

    pub fn radiance(&self, model: ShadingModel, mat: &MaterialParams) -> Rgb {
        match model {
            ShadingModel::SpecularTint => self.tint_radiance(mat),
            ShadingModel::MetallicBlend => self.blend_radiance(mat),
        }
    }

    pub fn backward(
        &self,
        model: ShadingModel,
        mat: &MaterialParams,
        upstream: &Rgb,
        grad: &mut MaterialGrad,
        env_grad: Option<&mut PrefilteredGrad>,
    ) {
        match model {
            ShadingModel::SpecularTint => self.tint_backward(mat, upstream, grad, env_grad),
            ShadingModel::MetallicBlend => self.blend_backward(mat, upstream, grad, env_grad),
        }
    }
}

/// Specular-tint shading: `E_s s beta1 + E_s beta2 + E_d b`.
pub fn shade_proposed(
    mat: &MaterialParams,
    n: &Vec3,
    v: &Vec3,
    env: &PrefilteredEnv,
    lut: &BrdfLut,
) -> Rgb {
    ShadingQuery::new(n, v, mat.roughness, env, lut).tint_radiance(mat)
}

/// Metallic-blend shading with dielectric F0 = 0.04.
pub fn shade_metallic_blend(
    mat: &MaterialParams,
    n: &Vec3,
    v: &Vec3,
    env: &PrefilteredEnv,
    lut: &BrdfLut,
) -> Rgb {
    ShadingQuery::new(n, v, mat.roughness, env, lut).blend_radiance(mat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brdf::integrate_brdf_lut;
    use crate::envmap::{CubeMap, EnvPrefilter, PrefilterSettings};
    use crate::math::gray;

    fn env() -> PrefilteredEnv {
        let raw = CubeMap::from_fn(8, |d| Rgb::new(1.0 + d.y, 0.5 + 0.25 * d.x, 0.8 - 0.3 * d.z));
        EnvPrefilter::new(8, PrefilterSettings { samples: 64, ..PrefilterSettings::for_base(8) })
            .unwrap()
            .apply(&raw)
    }

    #[test]
    fn dielectric_tint_matches_blend_at_m0() {
        let (env, lut) = (env(), integrate_brdf_lut(16, 256, 0).unwrap());
        let n = Vec3::new(0.1, 0.9, 0.2).normalize();
        let v = Vec3::new(0.5, 0.7, 0.1).normalize();
        let b = Rgb::new(0.7, 0.2, 0.4);
        let tint = MaterialParams::new(b, gray(DIELECTRIC_F0), 0.37);
        let blend = MaterialParams { metallic: 0.0, ..MaterialParams::new(b, gray(0.9), 0.37) };
        let a = shade_proposed(&tint, &n, &v, &env, &lut);
        let c = shade_metallic_blend(&blend, &n, &v, &env, &lut);
        assert!((a - c).norm() < 1e-12);
    }

    #[test]
    fn metal_has_no_diffuse_and_is_linear_in_m() {
        let (env, lut) = (env(), integrate_brdf_lut(16, 256, 0).unwrap());
        let n = Vec3::y();
        let v = Vec3::new(0.2, 0.9, 0.1).normalize();
        let mut mat = MaterialParams::new(Rgb::new(0.9, 0.5, 0.1), gray(0.0), 0.5);
        let q = ShadingQuery::new(&n, &v, mat.roughness, &env, &lut);
        mat.metallic = 1.0;
        let (b1, b2) = (q.lut.beta1, q.lut.beta2);
        let expect = q.e_s.component_mul(&(mat.basecolor * b1 + Rgb::repeat(b2)));
        assert!((q.blend_radiance(&mat) - expect).norm() < 1e-14);
        let at = |m: f64| q.blend_radiance(&MaterialParams { metallic: m, ..mat });
        assert!((at(0.5) - (at(0.0) * 0.5 + at(1.0) * 0.5)).norm() < 1e-14);
    }

    #[test]
    fn constant_env_black_base_dielectric() {
        let c = 1.7;
        let raw = CubeMap::constant(8, gray(c));
        let env = EnvPrefilter::new(8, PrefilterSettings { samples: 32, ..PrefilterSettings::for_base(8) })
            .unwrap()
            .apply(&raw);
        let lut = integrate_brdf_lut(16, 256, 0).unwrap();
        let mat = MaterialParams::new(Rgb::zeros(), gray(0.3), 0.6);
        let n = Vec3::z();
        let v = Vec3::new(0.0, 0.6, 0.8);
        let (b1, b2) = lut.lookup(0.8, 0.6);
        let l = shade_metallic_blend(&mat, &n, &v, &env, &lut);
        assert!((l.x - c * (DIELECTRIC_F0 * b1 + b2)).abs() < 1e-9);
    }

    #[test]
    fn grazing_view_is_clamped() {
        let (env, lut) = (env(), integrate_brdf_lut(16, 256, 0).unwrap());
        let mat = MaterialParams::default();
        let l = shade_proposed(&mat, &Vec3::z(), &Vec3::x(), &env, &lut);
        assert!(l.iter().all(|x| x.is_finite() && *x >= 0.0));
    }

    #[test]
    fn project_clamps_fields() {
        let mut m = MaterialParams {
            basecolor: Rgb::new(-0.1, 0.5, 1.3),
            specular_tint: Rgb::new(f64::NAN, 2.0, 0.2),
            roughness: 1.5,
            metallic: -1.0,
        };
        assert!(!m.is_valid());
        m.project();
        assert!(m.is_valid());
    }
}
