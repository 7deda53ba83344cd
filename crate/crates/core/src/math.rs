//! Small vector helpers shared by the shading and sampling code.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Vec3 = Vector3<f64>;

/// Linear RGB triple. Channels are independent; use `component_mul` for
/// per-channel products.
pub type Rgb = Vector3<f64>;

pub fn rgb(r: f64, g: f64, b: f64) -> Rgb {
    Rgb::new(r, g, b)
}

pub fn gray(v: f64) -> Rgb {
    Rgb::new(v, v, v)
}

/// Mirror `incident` (pointing toward the surface) about `n`.
pub fn reflect(incident: &Vec3, n: &Vec3) -> Vec3 {
    incident - 2.0 * incident.dot(n) * n
}

/// Right-handed tangent frame (t, b) around unit `n`.
pub fn orthonormal_basis(n: &Vec3) -> (Vec3, Vec3) {
    // Duff et al. branchless construction.
    let sign = 1.0f64.copysign(n.z);
    let a = -1.0 / (sign + n.z);
    let b = n.x * n.y * a;
    let t = Vec3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x);
    let bt = Vec3::new(b, sign + n.y * n.y * a, -n.y);
    (t, bt)
}

pub fn to_world(local: &Vec3, n: &Vec3) -> Vec3 {
    let (t, b) = orthonormal_basis(n);
    t * local.x + b * local.y + n * local.z
}

fn radical_inverse_base2(i: u32) -> f64 {
    i.reverse_bits() as f64 * (1.0 / 4_294_967_296.0)
}

/// Hammersley point set of size `count`, Cranley-Patterson rotated by an
/// offset drawn from `seed`. Deterministic for a given (count, seed).
#[derive(Debug, Clone)]
pub struct SampleSet {
    points: Vec<(f64, f64)>,
}

impl SampleSet {
    pub fn hammersley(count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (du, dv): (f64, f64) = (rng.gen(), rng.gen());
        let points = (0..count)
            .map(|i| {
                let u = (i as f64 + 0.5) / count as f64;
                let v = radical_inverse_base2(i as u32);
                ((u + du).fract(), (v + dv).fract())
            })
            .collect();
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied()
    }
}
