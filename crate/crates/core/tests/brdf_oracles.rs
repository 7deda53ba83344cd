//! Reflectance oracles: dense hemisphere quadrature for the table, Monte
//! Carlo convergence and energy bounds, and split-sum agreement under a
//! constant environment.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gsrelight::brdf::{eval_brdf, render_equation_mc, shared_lut, BrdfParams, ShadingGeometry};
use gsrelight::envmap::{CubeMap, EnvPrefilter, PrefilterSettings};
use gsrelight::math::{Rgb, Vec3};
use gsrelight::shading::{shade_proposed, MaterialParams};

/// `(beta1, beta2)` by midpoint quadrature over the light hemisphere, with
/// GGX and Smith-Schlick written out independently of the library.
fn table_entry_quadrature(mu: f64, r: f64, n_theta: usize) -> (f64, f64) {
    let a = (r * r).max(1e-4);
    let k = a / 2.0;
    let g1 = |x: f64| x / (x * (1.0 - k) + k);
    let v = Vec3::new((1.0 - mu * mu).sqrt(), 0.0, mu);
    let n_phi = 2 * n_theta;
    let (dt, dp) = (0.5 * PI / n_theta as f64, 2.0 * PI / n_phi as f64);
    let (mut b1, mut b2) = (0.0, 0.0);
    for i in 0..n_theta {
        let t = (i as f64 + 0.5) * dt;
        let (st, ct) = t.sin_cos();
        for j in 0..n_phi {
            let p = (j as f64 + 0.5) * dp;
            let l = Vec3::new(st * p.cos(), st * p.sin(), ct);
            let h = (l + v).normalize();
            let nh = h.z;
            let d = a * a / (PI * (nh * nh * (a * a - 1.0) + 1.0).powi(2));
            let spec = d * g1(ct) * g1(mu) / (4.0 * ct * mu);
            let fc = (1.0 - v.dot(&h).max(0.0)).powi(5);
            let w = spec * ct * st * dt * dp;
            b1 += w * (1.0 - fc);
            b2 += w * fc;
        }
    }
    (b1, b2)
}

#[test]
fn table_matches_dense_quadrature_and_beta2_is_bounded() {
    let lut = shared_lut();
    for &mu in &[0.2, 0.5, 0.9] {
        for &r in &[0.3, 0.6, 1.0] {
            let (q1, q2) = table_entry_quadrature(mu, r, 1200);
            let (b1, b2) = lut.lookup(mu, r);
            assert!(q2 <= 1.0 && b2 <= 1.0, "beta2 above 1 at mu {mu} r {r}: {q2} / {b2}");
            assert!((b1 - q1).abs() < 1e-2, "beta1 at mu {mu} r {r}: table {b1} quadrature {q1}");
            assert!((b2 - q2).abs() < 5e-3, "beta2 at mu {mu} r {r}: table {b2} quadrature {q2}");
        }
    }
}

#[test]
fn mirror_limit_from_quadrature() {
    // Near-mirror normal incidence: all energy reflected at F = 1.
    let (b1, b2) = table_entry_quadrature(1.0 - 1e-9, 0.1, 3000);
    assert!((b1 + b2 - 1.0).abs() < 0.02, "{}", b1 + b2);
    let (l1, l2) = shared_lut().lookup(1.0, 0.0);
    assert!((l1 + l2 - 1.0).abs() < 0.02, "{}", l1 + l2);
}

#[test]
fn brdf_is_nonnegative_and_reciprocal_over_random_geometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let hemi = |rng: &mut ChaCha8Rng| loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0));
        if v.norm() > 0.1 && v.norm() <= 1.0 {
            return v.normalize();
        }
    };
    for _ in 0..10_000 {
        let (v, l) = (hemi(&mut rng), hemi(&mut rng));
        let b = Rgb::new(rng.gen(), rng.gen(), rng.gen());
        let p = BrdfParams::metallic(b, rng.gen(), rng.gen());
        let f = eval_brdf(&p, &ShadingGeometry::new(Vec3::z(), v, l));
        let g = eval_brdf(&p, &ShadingGeometry::new(Vec3::z(), l, v));
        assert!(f.iter().all(|&x| x >= 0.0 && x.is_finite()));
        assert!((f - g).amax() <= 1e-9 * f.amax().max(1.0));
    }
}

fn smooth_env(size: usize) -> CubeMap {
    CubeMap::from_fn(size, |d| Rgb::new(0.7 + 0.3 * d.y, 0.5 + 0.2 * d.x, 0.6 - 0.25 * d.z))
}

#[test]
fn mc_standard_error_halves_when_samples_quadruple() {
    let env = smooth_env(16);
    let n = Vec3::y();
    let v = Vec3::new(0.6, 0.8, 0.0);
    let p = BrdfParams::tinted(Rgb::new(0.5, 0.4, 0.3), Rgb::repeat(0.3), 0.4);
    let small = render_equation_mc(&p, &n, &v, &env, 4096, 3).unwrap();
    let large = render_equation_mc(&p, &n, &v, &env, 4 * 4096, 4).unwrap();
    for c in 0..3 {
        let ratio = small.std_error[c] / large.std_error[c];
        assert!((2.0 / 1.5..=2.0 * 1.5).contains(&ratio), "channel {c}: ratio {ratio}");
    }
}

#[test]
fn white_furnace_creates_no_energy() {
    let env = CubeMap::constant(8, Rgb::repeat(1.0));
    let p0 = BrdfParams { diffuse: Rgb::zeros(), f0: Rgb::repeat(1.0), roughness: 0.0, specular: true };
    for &r in &[0.05, 0.2, 0.4, 0.6, 0.8, 1.0] {
        for &elev in &[10.0f64, 30.0, 60.0, 89.0] {
            let e = elev.to_radians();
            let v = Vec3::new(e.cos(), e.sin(), 0.0);
            let est = render_equation_mc(&BrdfParams { roughness: r, ..p0 }, &Vec3::y(), &v, &env, 1 << 15, 8).unwrap();
            assert!(est.value.max() <= 1.02, "r {r} elev {elev}: {}", est.value.max());
        }
    }
}

#[test]
fn split_sum_matches_mc_under_constant_light() {
    let c = Rgb::new(0.9, 0.7, 1.2);
    let raw = CubeMap::constant(16, c);
    let env = EnvPrefilter::new(16, PrefilterSettings::for_base(16)).unwrap().apply(&raw);
    let lut = shared_lut();
    let n = Vec3::y();
    for &r in &[0.2, 0.5, 0.8] {
        for &elev in &[30.0f64, 60.0, 85.0] {
            let e = elev.to_radians();
            let v = Vec3::new(e.cos(), e.sin(), 0.0);
            let mat = MaterialParams::new(Rgb::new(0.4, 0.3, 0.2), Rgb::repeat(0.5), r);
            let split = shade_proposed(&mat, &n, &v, &env, lut);
            let p = BrdfParams::tinted(mat.basecolor, mat.specular_tint, r);
            let mc = render_equation_mc(&p, &n, &v, &raw, 1 << 16, 12).unwrap();
            for ch in 0..3 {
                let rel = (split[ch] - mc.value[ch]).abs() / mc.value[ch];
                assert!(rel < 0.05, "r {r} elev {elev} ch {ch}: split {} mc {}", split[ch], mc.value[ch]);
            }
        }
    }
}

#[test]
fn lambert_under_constant_light_is_within_three_standard_errors() {
    let c = Rgb::new(0.8, 1.1, 0.5);
    let env = CubeMap::constant(8, c);
    let b = Rgb::new(0.6, 0.3, 0.9);
    let v = Vec3::new(0.3, 0.9, 0.1).normalize();
    let est = render_equation_mc(&BrdfParams::lambert(b), &Vec3::y(), &v, &env, 1 << 14, 21).unwrap();
    for ch in 0..3 {
        let expect = c[ch] * b[ch];
        assert!((est.value[ch] - expect).abs() <= 3.0 * est.std_error[ch].max(1e-12), "ch {ch}");
    }
}
