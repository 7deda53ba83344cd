use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{eval_brdf, ggx_alpha, ggx_ndf, sample_ggx_half, BrdfParams, ShadingGeometry};
use crate::envmap::CubeMap;
use crate::error::{Error, Result};
use crate::math::{to_world, Rgb, Vec3};

/// Monte-Carlo estimate with its per-channel standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: Rgb,
    pub std_error: Rgb,
    pub samples: usize,
}

/// Estimate `int f_r(v, l) L(l) (n.l) dl` over the upper hemisphere.
///
/// Each sample picks cosine or GGX-reflection sampling with equal
/// probability and is weighted by the mixture density (one-sample balance
/// heuristic), so the estimator is unbiased for any roughness.
pub fn render_equation_mc(
    params: &BrdfParams,
    n: &Vec3,
    v: &Vec3,
    env: &CubeMap,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_samples < 16 {
        return Err(Error::invalid(format!("need at least 16 samples, got {n_samples}")));
    }
    let nv = n.dot(v);
    if nv <= 0.0 {
        return Err(Error::invalid("view direction below the surface"));
    }
    let alpha = ggx_alpha(params.roughness);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = Rgb::zeros();
    let mut sum_sq = Rgb::zeros();
    for _ in 0..n_samples {
        let (u0, u1, u2): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
        let l = if u0 < 0.5 {
            let r = u1.sqrt();
            let phi = 2.0 * PI * u2;
            to_world(&Vec3::new(r * phi.cos(), r * phi.sin(), (1.0 - u1).max(0.0).sqrt()), n)
        } else {
            let h = to_world(&sample_ggx_half(u1, u2, alpha), n);
            2.0 * v.dot(&h) * h - v
        };
        let nl = n.dot(&l);
        if nl <= 0.0 {
            continue;
        }
        let l = l.normalize();
        let geom = ShadingGeometry::new(*n, *v, l);
        let nh = n.dot(&geom.h);
        let vh = v.dot(&geom.h);
        let pdf_cos = nl / PI;
        let pdf_ggx = if vh > 0.0 && nh > 0.0 {
            ggx_ndf(params.roughness, nh) * nh / (4.0 * vh)
        } else {
            0.0
        };
        let pdf = 0.5 * pdf_cos + 0.5 * pdf_ggx;
        if pdf <= 0.0 {
            continue;
        }
        let f = eval_brdf(params, &geom);
        let contrib = f.component_mul(&env.lookup(&l)) * (nl / pdf);
        sum += contrib;
        sum_sq += contrib.component_mul(&contrib);
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean.component_mul(&mean)).map(|x| x.max(0.0));
    Ok(McEstimate { value: mean, std_error: (var / (n - 1.0)).map(f64::sqrt), samples: n_samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::gray;

    #[test]
    fn rejects_too_few_samples() {
        let env = CubeMap::constant(4, gray(1.0));
        let p = BrdfParams::tinted(gray(0.5), Rgb::zeros(), 0.5);
        assert!(render_equation_mc(&p, &Vec3::z(), &Vec3::z(), &env, 8, 0).is_err());
    }

    #[test]
    fn black_env_is_black() {
        let env = CubeMap::black(4);
        let p = BrdfParams::tinted(gray(0.8), gray(0.5), 0.3);
        let e = render_equation_mc(&p, &Vec3::z(), &Vec3::z(), &env, 256, 0).unwrap();
        assert_eq!(e.value, Rgb::zeros());
    }

    #[test]
    fn lambert_under_constant_env() {
        let c = Rgb::new(0.5, 1.0, 2.0);
        let b = Rgb::new(0.8, 0.4, 0.2);
        let env = CubeMap::constant(8, c);
        let p = BrdfParams::lambert(b);
        let v = Vec3::new(0.3, 0.1, 0.9).normalize();
        let e = render_equation_mc(&p, &Vec3::z(), &v, &env, 20_000, 5).unwrap();
        let expect = c.component_mul(&b);
        for k in 0..3 {
            assert!((e.value[k] - expect[k]).abs() <= 3.0 * e.std_error[k], "{e:?}");
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let env = CubeMap::from_fn(8, |d| gray(1.0 + d.y));
        let p = BrdfParams::tinted(gray(0.3), gray(0.2), 0.4);
        let a = render_equation_mc(&p, &Vec3::y(), &Vec3::y(), &env, 512, 9).unwrap();
        let b = render_equation_mc(&p, &Vec3::y(), &Vec3::y(), &env, 512, 9).unwrap();
        assert_eq!(a, b);
    }
}
