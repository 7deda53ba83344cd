use rayon::prelude::*;

use super::{ggx_alpha, sample_ggx_half, smith_g};
use crate::error::{Error, Result};
use crate::math::{SampleSet, Vec3};

/// Smallest `n.v` at which the table is evaluated or queried.
pub const MIN_COS_VIEW: f64 = 1e-4;

/// Split-sum environment-BRDF table. `beta1` multiplies F0, `beta2` is the
/// F0-independent part, so the specular scale is `F0 beta1 + beta2`.
///
/// Nodes sit at `i / (resolution - 1)` on both axes; lookups are bilinear.
#[derive(Debug, Clone, PartialEq)]
pub struct BrdfLut {
    resolution: usize,
    samples: usize,
    seed: u64,
    /// `[beta1, beta2]` per node, row-major with roughness as the row.
    data: Vec<[f64; 2]>,
}

/// Bilinear lookup result with derivatives along roughness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LutSample {
    pub beta1: f64,
    pub beta2: f64,
    pub dbeta1_dr: f64,
    pub dbeta2_dr: f64,
}

fn node(i: usize, n: usize) -> f64 {
    i as f64 / (n - 1) as f64
}

fn cell(x: f64, n: usize) -> (usize, f64) {
    let s = x.clamp(0.0, 1.0) * (n - 1) as f64;
    let i = (s.floor() as usize).min(n - 2);
    (i, s - i as f64)
}

/// Importance-sampled `(beta1, beta2)` for one `(n.v, roughness)` pair.
pub(crate) fn integrate_entry(mu: f64, roughness: f64, samples: &SampleSet) -> [f64; 2] {
    let mu = mu.max(MIN_COS_VIEW);
    let v = Vec3::new((1.0 - mu * mu).max(0.0).sqrt(), 0.0, mu);
    let alpha = ggx_alpha(roughness);
    let (mut a, mut b) = (0.0, 0.0);
    for (u1, u2) in samples.iter() {
        let h = sample_ggx_half(u1, u2, alpha);
        let vh = v.dot(&h);
        let l = 2.0 * vh * h - v;
        let nl = l.z;
        let nh = h.z;
        if nl > 0.0 && vh > 0.0 && nh > 0.0 {
            let g_vis = smith_g(roughness, nl, mu) * vh / (nh * mu);
            let fc = (1.0 - vh).powi(5);
            a += (1.0 - fc) * g_vis;
            b += fc * g_vis;
        }
    }
    let n = samples.len() as f64;
    [a / n, b / n]
}

/// Build the table from `samples` Hammersley samples per node.
pub fn integrate_brdf_lut(resolution: usize, samples: usize, seed: u64) -> Result<BrdfLut> {
    if resolution < 16 {
        return Err(Error::invalid(format!("LUT resolution must be >= 16, got {resolution}")));
    }
    if samples < 256 {
        return Err(Error::invalid(format!("LUT samples must be >= 256, got {samples}")));
    }
    let set = SampleSet::hammersley(samples, seed);
    let data = (0..resolution * resolution)
        .into_par_iter()
        .map(|i| {
            let (ri, mi) = (i / resolution, i % resolution);
            integrate_entry(node(mi, resolution), node(ri, resolution), &set)
        })
        .collect();
    Ok(BrdfLut { resolution, samples, seed, data })
}

/// Process-wide default table, built on first use.
pub fn shared_lut() -> &'static BrdfLut {
    static LUT: std::sync::OnceLock<BrdfLut> = std::sync::OnceLock::new();
    LUT.get_or_init(BrdfLut::default_table)
}

impl BrdfLut {
    pub const DEFAULT_RESOLUTION: usize = 64;
    pub const DEFAULT_SAMPLES: usize = 1024;

    pub fn default_table() -> Self {
        integrate_brdf_lut(Self::DEFAULT_RESOLUTION, Self::DEFAULT_SAMPLES, 0)
            .expect("default LUT parameters are valid")
    }

    /// Rebuild from stored node values (e.g. a float dump).
    pub fn from_entries(resolution: usize, seed: u64, entries: Vec<[f64; 2]>) -> Result<Self> {
        if resolution < 2 || entries.len() != resolution * resolution {
            return Err(Error::invalid("LUT entry count does not match resolution"));
        }
        Ok(Self { resolution, samples: 0, seed, data: entries })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn entries(&self) -> &[[f64; 2]] {
        &self.data
    }

    pub fn entries_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.data
    }

    /// Node value at grid indices `(mu index, roughness index)`.
    pub fn node(&self, mu_idx: usize, r_idx: usize) -> [f64; 2] {
        self.data[r_idx * self.resolution + mu_idx]
    }

    pub fn node_coords(&self, mu_idx: usize, r_idx: usize) -> (f64, f64) {
        (node(mu_idx, self.resolution).max(MIN_COS_VIEW), node(r_idx, self.resolution))
    }

    pub fn lookup(&self, n_dot_v: f64, roughness: f64) -> (f64, f64) {
        let s = self.sample(n_dot_v, roughness);
        (s.beta1, s.beta2)
    }

    pub fn sample(&self, n_dot_v: f64, roughness: f64) -> LutSample {
        let n = self.resolution;
        let (mi, fm) = cell(n_dot_v.max(MIN_COS_VIEW), n);
        let (ri, fr) = cell(roughness, n);
        let at = |m: usize, r: usize| self.data[r * n + m];
        let (a00, a10, a01, a11) = (at(mi, ri), at(mi + 1, ri), at(mi, ri + 1), at(mi + 1, ri + 1));
        let mut out = [0.0; 2];
        let mut d = [0.0; 2];
        for k in 0..2 {
            let lo = a00[k] * (1.0 - fm) + a10[k] * fm;
            let hi = a01[k] * (1.0 - fm) + a11[k] * fm;
            out[k] = lo * (1.0 - fr) + hi * fr;
            d[k] = (hi - lo) * (n - 1) as f64;
        }
        // Clamped outside [0, 1]: flat in r.
        if !(0.0..=1.0).contains(&roughness) {
            d = [0.0; 2];
        }
        LutSample { beta1: out[0], beta2: out[1], dbeta1_dr: d[0], dbeta2_dr: d[1] }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_lut() -> BrdfLut {
        integrate_brdf_lut(16, 512, 0).unwrap()
    }

    #[test]
    fn rejects_small_inputs() {
        assert!(integrate_brdf_lut(8, 1024, 0).is_err());
        assert!(integrate_brdf_lut(16, 100, 0).is_err());
    }

    #[test]
    fn entries_are_bounded() {
        let lut = small_lut();
        for e in lut.entries() {
            assert!(e[0] >= 0.0 && e[1] >= 0.0);
            assert!(e[0] + e[1] <= 1.0 + 1e-3, "{e:?}");
        }
    }

    #[test]
    fn mirror_limit_reflects_everything() {
        let lut = small_lut();
        let [a, b] = lut.node(15, 0);
        assert!((a + b - 1.0).abs() < 0.02, "{a} + {b}");
        assert!(b < 0.01);
    }

    #[test]
    fn beta2_non_increasing_in_mu_away_from_grazing() {
        let lut = integrate_brdf_lut(64, 1024, 0).unwrap();
        for ri in 0..64 {
            for mi in 0..63 {
                let (mu, _) = lut.node_coords(mi, ri);
                if mu < 0.1 {
                    continue;
                }
                let b0 = lut.node(mi, ri)[1];
                let b1 = lut.node(mi + 1, ri)[1];
                assert!(b1 <= b0 + 1e-6, "r={ri} mu={mi}: {b0} -> {b1}");
            }
        }
    }

    #[test]
    fn beta2_rises_at_grazing_for_smooth_surfaces() {
        // Separable Smith masking G1(mu) = mu / (mu (1 - k) + k) falls below 1
        // once mu approaches k, which outweighs the Fresnel boost.
        let lut = integrate_brdf_lut(64, 1024, 0).unwrap();
        assert!(lut.node(1, 0)[1] > lut.node(0, 0)[1]);
    }

    #[test]
    fn deterministic() {
        assert_eq!(small_lut(), small_lut());
    }

    #[test]
    fn lookup_hits_nodes_and_interpolates() {
        let lut = small_lut();
        let (mu, r) = lut.node_coords(7, 4);
        let (a, b) = lut.lookup(mu, r);
        assert_eq!([a, b], lut.node(7, 4));
        let (mu2, _) = lut.node_coords(8, 4);
        let mid = lut.sample(0.5 * (mu + mu2), r);
        let expect = 0.5 * (lut.node(7, 4)[0] + lut.node(8, 4)[0]);
        assert!((mid.beta1 - expect).abs() < 1e-12);
    }

    #[test]
    fn roughness_derivative_matches_difference() {
        let lut = small_lut();
        let (mu, r, h) = (0.63, 0.41, 1e-6);
        let s = lut.sample(mu, r);
        let fd = (lut.sample(mu, r + h).beta2 - lut.sample(mu, r - h).beta2) / (2.0 * h);
        assert!((s.dbeta2_dr - fd).abs() < 1e-6);
    }
}
