//! Microfacet terms (GGX / Smith / Schlick), the split-sum BRDF table and a
//! Monte-Carlo estimator of the full reflection integral.
//!
//! Roughness `r` maps to `alpha = r^2` everywhere; `alpha` is floored at
//! [`MIN_ALPHA`] so the distribution stays finite for mirror-like inputs.

pub mod lut;
mod mc;

pub use lut::{integrate_brdf_lut, shared_lut, BrdfLut, LutSample};
pub use mc::{render_equation_mc, McEstimate};

use std::f64::consts::PI;

use crate::math::{Rgb, Vec3};

pub const MIN_ALPHA: f64 = 1e-4;

/// Constant reflectance at normal incidence assumed for dielectrics.
pub const DIELECTRIC_F0: f64 = 0.04;

pub fn ggx_alpha(roughness: f64) -> f64 {
    (roughness * roughness).max(MIN_ALPHA)
}

/// Trowbridge-Reitz distribution `D(h)`.
pub fn ggx_ndf(roughness: f64, n_dot_h: f64) -> f64 {
    let a2 = ggx_alpha(roughness).powi(2);
    let c2 = n_dot_h * n_dot_h;
    // (1 - c2) + c2 a2 keeps full precision at c2 = 1.
    let d = (1.0 - c2) + c2 * a2;
    a2 / (PI * d * d)
}

fn schlick_g1(x: f64, k: f64) -> f64 {
    x / (x * (1.0 - k) + k)
}

/// Separable Schlick-GGX masking-shadowing with `k = alpha / 2`.
pub fn smith_g(roughness: f64, n_dot_l: f64, n_dot_v: f64) -> f64 {
    let k = ggx_alpha(roughness) * 0.5;
    schlick_g1(n_dot_l, k) * schlick_g1(n_dot_v, k)
}

pub fn fresnel_schlick(f0: &Rgb, v_dot_h: f64) -> Rgb {
    let fc = (1.0 - v_dot_h).clamp(0.0, 1.0).powi(5);
    f0 * (1.0 - fc) + Rgb::repeat(fc)
}

/// Half-vector drawn from `D(h) (n.h)` in the local frame (`n = +z`).
pub fn sample_ggx_half(u1: f64, u2: f64, alpha: f64) -> Vec3 {
    let phi = 2.0 * PI * u1;
    let a2 = alpha * alpha;
    let cos2 = ((1.0 - u2) / (1.0 + (a2 - 1.0) * u2)).clamp(0.0, 1.0);
    let cos_t = cos2.sqrt();
    let sin_t = (1.0 - cos2).sqrt();
    Vec3::new(sin_t * phi.cos(), sin_t * phi.sin(), cos_t)
}

/// Unit normal, view, light and half vectors of one shading evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadingGeometry {
    pub n: Vec3,
    pub v: Vec3,
    pub l: Vec3,
    pub h: Vec3,
}

impl ShadingGeometry {
    pub fn new(n: Vec3, v: Vec3, l: Vec3) -> Self {
        let h = (v + l).try_normalize(0.0).unwrap_or(n);
        Self { n, v, l, h }
    }
}

/// Reflectance parameters in the general diffuse + F0 form. Both shading
/// models reduce to it: the metallic blend through [`BrdfParams::metallic`],
/// the specular-tint model through [`BrdfParams::tinted`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrdfParams {
    pub diffuse: Rgb,
    pub f0: Rgb,
    pub roughness: f64,
    /// When false the Cook-Torrance lobe is dropped (pure Lambert).
    pub specular: bool,
}

impl BrdfParams {
    /// `(1 - m) b` diffuse, `F0 = m b + (1 - m) 0.04`.
    pub fn metallic(basecolor: Rgb, metallic: f64, roughness: f64) -> Self {
        Self {
            diffuse: basecolor * (1.0 - metallic),
            f0: basecolor * metallic + Rgb::repeat((1.0 - metallic) * DIELECTRIC_F0),
            roughness,
            specular: true,
        }
    }

    /// Diffuse `b`, `F0 = s`.
    pub fn tinted(basecolor: Rgb, tint: Rgb, roughness: f64) -> Self {
        Self { diffuse: basecolor, f0: tint, roughness, specular: true }
    }

    pub fn lambert(basecolor: Rgb) -> Self {
        Self { diffuse: basecolor, f0: Rgb::zeros(), roughness: 1.0, specular: false }
    }
}

/// Lambert plus Cook-Torrance reflectance per steradian. Zero outside the
/// upper hemisphere of either `l` or `v`.
pub fn eval_brdf(p: &BrdfParams, g: &ShadingGeometry) -> Rgb {
    let nl = g.n.dot(&g.l);
    let nv = g.n.dot(&g.v);
    if nl <= 0.0 || nv <= 0.0 {
        return Rgb::zeros();
    }
    if !p.specular {
        return p.diffuse / PI;
    }
    let nh = g.n.dot(&g.h).max(0.0);
    let vh = g.v.dot(&g.h).max(0.0);
    let d = ggx_ndf(p.roughness, nh);
    let geo = smith_g(p.roughness, nl, nv);
    let f = fresnel_schlick(&p.f0, vh);
    p.diffuse / PI + f * (d * geo / (4.0 * nl * nv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::gray;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn schlick_limits() {
        let f0 = Rgb::new(0.04, 0.5, 0.9);
        assert_eq!(fresnel_schlick(&f0, 1.0), f0);
        assert!((fresnel_schlick(&f0, 0.0) - gray(1.0)).norm() < 1e-15);
    }

    #[test]
    fn ndf_is_normalized() {
        // int D(h) (n.h) dw_h over the hemisphere, dense midpoint quadrature in
        // (cos theta, phi); D is azimuth independent so phi integrates to 2 pi.
        for r in [0.3, 0.5, 1.0] {
            let steps = 200_000;
            let mut sum = 0.0;
            for i in 0..steps {
                let c = (i as f64 + 0.5) / steps as f64;
                sum += ggx_ndf(r, c) * c;
            }
            let integral = 2.0 * PI * sum / steps as f64;
            assert!((integral - 1.0).abs() < 0.01, "r={r}: {integral}");
        }
    }

    #[test]
    fn zero_roughness_is_finite() {
        let d = ggx_ndf(0.0, 1.0);
        assert!(d.is_finite());
        assert!((d - 1.0 / (PI * MIN_ALPHA * MIN_ALPHA)).abs() / d < 1e-12);
    }

    #[test]
    fn dielectric_black_is_gray_specular() {
        let p = BrdfParams::metallic(Rgb::zeros(), 0.0, 1.0);
        assert_eq!(p.f0, gray(DIELECTRIC_F0));
        let n = Vec3::z();
        let g = ShadingGeometry::new(n, Vec3::new(0.3, 0.0, 0.95).normalize(), Vec3::new(-0.2, 0.4, 0.9).normalize());
        let f = eval_brdf(&p, &g);
        assert!(f.x > 0.0 && f.x == f.y && f.y == f.z);
    }

    #[test]
    fn metal_has_no_diffuse() {
        let p = BrdfParams::metallic(Rgb::new(0.9, 0.6, 0.2), 1.0, 0.4);
        assert_eq!(p.diffuse, Rgb::zeros());
        assert_eq!(p.f0, Rgb::new(0.9, 0.6, 0.2));
    }

    #[test]
    fn nonnegative_and_reciprocal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = Vec3::z();
        let unit = |rng: &mut ChaCha8Rng| {
            Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                .try_normalize(1e-6)
                .unwrap_or(Vec3::z())
        };
        for _ in 0..10_000 {
            let p = BrdfParams::metallic(
                Rgb::new(rng.gen(), rng.gen(), rng.gen()),
                rng.gen(),
                rng.gen(),
            );
            let (v, l) = (unit(&mut rng), unit(&mut rng));
            let f = eval_brdf(&p, &ShadingGeometry::new(n, v, l));
            assert!(f.min() >= 0.0);
            let swapped = eval_brdf(&p, &ShadingGeometry::new(n, l, v));
            assert!((f - swapped).norm() <= 1e-9 * f.norm().max(1.0));
        }
    }

    #[test]
    fn below_horizon_is_zero() {
        let p = BrdfParams::tinted(gray(0.5), gray(0.5), 0.5);
        let g = ShadingGeometry::new(Vec3::z(), Vec3::new(0.0, 0.6, 0.8), Vec3::new(0.0, 0.6, -0.8));
        assert_eq!(eval_brdf(&p, &g), Rgb::zeros());
    }

    #[test]
    fn sampled_half_vectors_are_unit_and_upper() {
        for i in 0..100 {
            let h = sample_ggx_half(i as f64 / 100.0, (i as f64 * 0.37).fract(), 0.25);
            assert!((h.norm() - 1.0).abs() < 1e-12 && h.z >= 0.0);
        }
    }
}
