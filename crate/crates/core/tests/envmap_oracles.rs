//! Cube-map oracles: solid-angle partition, specular energy against dense
//! GGX quadrature, roughness interpolation bounds.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gsrelight::envmap::{
    direction_to_texel, prefilter_specular, texel_direction, total_solid_angle, CubeMap, Face, PrefilteredEnv,
    SpecularLevel,
};
use gsrelight::math::{Rgb, Vec3};

#[test]
fn solid_angles_partition_the_sphere() {
    for size in [8, 9, 16, 31, 64] {
        let total = total_solid_angle(size);
        assert!((total / (4.0 * PI) - 1.0).abs() < 1e-3, "size {size}: {total}");
        let sum: f64 = CubeMap::black(size).solid_angles().iter().sum();
        assert!((sum / (4.0 * PI) - 1.0).abs() < 1e-12, "size {size}: {sum}");
    }
}

#[test]
fn texel_round_trip_on_every_face() {
    for face in Face::ALL {
        for i in 0..16 {
            for j in 0..16 {
                let (u, v) = ((i as f64 + 0.5) / 16.0, (j as f64 + 0.5) / 16.0);
                let d = texel_direction(face, u, v);
                assert!((d.norm() - 1.0).abs() < 1e-12);
                let (f, u2, v2) = direction_to_texel(&d);
                assert_eq!(f, face);
                assert!((u - u2).abs() < 1e-12 && (v - v2).abs() < 1e-12);
            }
        }
    }
}

fn ggx_d(a: f64, nh: f64) -> f64 {
    a * a / (PI * (nh * nh * (a * a - 1.0) + 1.0).powi(2))
}

/// Expected level texel under the `n = v = R`, `n.l`-weighted convention,
/// integrating the bilinearly reconstructed source on a `fine`x finer grid.
fn dense_ggx_level(source: &CubeMap, r: f64, out_size: usize, fine: usize) -> CubeMap {
    let a = (r * r).max(1e-4);
    let dense = CubeMap::black(source.face_size() * fine);
    let samples: Vec<(Vec3, f64, Rgb)> = (0..dense.texel_count())
        .map(|t| {
            let d = dense.texel_center(t);
            (d, dense.texel_solid_angle(t), source.lookup(&d))
        })
        .collect();
    let out = CubeMap::black(out_size);
    let data: Vec<f64> = (0..out.texel_count())
        .flat_map(|t| {
            let n = out.texel_center(t);
            let (mut num, mut den) = (Rgb::zeros(), 0.0);
            for (l, dw, c) in &samples {
                let nl = n.dot(l);
                if nl <= 0.0 {
                    continue;
                }
                let nh = (n + l).normalize().dot(&n);
                let w = ggx_d(a, nh) * nl * dw;
                num += c * w;
                den += w;
            }
            let v = num / den;
            [v.x, v.y, v.z]
        })
        .collect();
    CubeMap::from_data(out_size, data).unwrap()
}

#[test]
fn single_bright_texel_energy_matches_dense_quadrature() {
    let mut source = CubeMap::black(16);
    let hot = source.texel_index(Face::PosZ, 5, 9);
    source.set_texel(hot, Rgb::repeat(100.0));
    let level = &prefilter_specular(&source, &[(0.0, 16), (0.5, 8)], 4096).unwrap()[1];
    let oracle = dense_ggx_level(&source, 0.5, 8, 4);
    let energy = |m: &CubeMap| m.radiant_sum().x;
    let (got, want) = (energy(&level.map), energy(&oracle));
    assert!((got / want - 1.0).abs() < 0.05, "prefilter {got} vs quadrature {want}");
    // The lobe spreads energy: the level peak sits far below the source peak.
    assert!(level.map.max_value() < 0.5 * 100.0);
}

#[test]
fn roughness_queries_stay_between_bracketing_levels() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let rough = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let specular: Vec<SpecularLevel> = rough
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let size = (16 >> i).max(4);
            let data = (0..6 * size * size * 3).map(|_| rng.gen_range(0.0..5.0)).collect();
            SpecularLevel { roughness: r, map: CubeMap::from_data(size, data).unwrap() }
        })
        .collect();
    let env = PrefilteredEnv { diffuse: CubeMap::black(4), specular };
    for _ in 0..2000 {
        let d = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let Some(d) = d.try_normalize(1e-6) else { continue };
        let r: f64 = rng.gen();
        let b = env.specular_bracket(r);
        let (lo, hi) = (env.specular[b.lo].map.lookup(&d), env.specular[b.hi].map.lookup(&d));
        let q = env.query_specular(&d, r);
        for c in 0..3 {
            let (a, z) = (lo[c].min(hi[c]), lo[c].max(hi[c]));
            assert!(q[c] >= a - 1e-12 && q[c] <= z + 1e-12, "r {r}: {} outside [{a}, {z}]", q[c]);
        }
    }
    for (i, &r) in rough.iter().enumerate() {
        let d = Vec3::new(0.3, -0.5, 0.8).normalize();
        assert_eq!(env.query_specular(&d, r), env.specular[i].map.lookup(&d));
    }
}

#[test]
fn midway_roughness_averages_constant_levels() {
    let (c1, c2) = (Rgb::new(0.2, 1.0, 3.0), Rgb::new(1.0, 0.5, 0.0));
    let env = PrefilteredEnv {
        diffuse: CubeMap::black(4),
        specular: vec![
            SpecularLevel { roughness: 0.0, map: CubeMap::constant(8, c1) },
            SpecularLevel { roughness: 0.5, map: CubeMap::constant(4, c2) },
        ],
    };
    let q = env.query_specular(&Vec3::new(1.0, 2.0, -0.5).normalize(), 0.25);
    assert!((q - (c1 + c2) / 2.0).amax() < 1e-15);
}
