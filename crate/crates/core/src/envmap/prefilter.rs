use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use super::{CubeMap, Taps};
use crate::brdf::{ggx_alpha, sample_ggx_half};
use crate::error::{Error, Result};
use crate::math::{to_world, Rgb, SampleSet, Vec3};

/// Roughness of each stored specular level.
pub const DEFAULT_LEVEL_ROUGHNESS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

/// `(roughness, face_size)` pairs: face sizes halve from `base`, floored at
/// `min_face` (or `base` if smaller).
pub fn default_levels(base: usize, min_face: usize) -> Vec<(f64, usize)> {
    let floor = min_face.min(base).max(1);
    DEFAULT_LEVEL_ROUGHNESS
        .iter()
        .enumerate()
        .map(|(i, &r)| (r, (base >> i).max(floor)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefilterSettings {
    pub diffuse_size: usize,
    pub levels: Vec<(f64, usize)>,
    pub samples: usize,
    pub seed: u64,
}

impl PrefilterSettings {
    pub fn for_base(base: usize) -> Self {
        Self {
            diffuse_size: (base / 2).clamp(4, 16),
            levels: default_levels(base, 8),
            samples: 1024,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecularLevel {
    pub roughness: f64,
    pub map: CubeMap,
}

/// Diffuse irradiance plus the roughness-indexed specular chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefilteredEnv {
    pub diffuse: CubeMap,
    pub specular: Vec<SpecularLevel>,
}

/// Bracketing specular levels for a roughness query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: usize,
    pub hi: usize,
    /// Interpolation weight of `hi`.
    pub t: f64,
    /// `dt / dr` of the bracketing interval.
    pub dt_dr: f64,
}

impl PrefilteredEnv {
    pub fn query_diffuse(&self, n: &Vec3) -> Rgb {
        self.diffuse.lookup(n)
    }

    pub fn specular_bracket(&self, roughness: f64) -> Bracket {
        let levels = &self.specular;
        let last = levels.len() - 1;
        let r = if (0.0..=1.0).contains(&roughness) {
            roughness
        } else {
            if cfg!(debug_assertions) {
                log::debug!("specular query roughness {roughness} clamped to [0, 1]");
            }
            roughness.clamp(0.0, 1.0)
        };
        if last == 0 {
            return Bracket { lo: 0, hi: 0, t: 0.0, dt_dr: 0.0 };
        }
        let i = match levels.iter().position(|l| l.roughness > r) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => last - 1,
        };
        let (r0, r1) = (levels[i].roughness, levels[i + 1].roughness);
        // Exact level matches must not pick up interpolation rounding.
        let t = if r == r1 { 1.0 } else { ((r - r0) / (r1 - r0)).clamp(0.0, 1.0) };
        Bracket { lo: i, hi: i + 1, t, dt_dr: 1.0 / (r1 - r0) }
    }

    /// Roughness-interpolated specular radiance about `dir`.
    pub fn query_specular(&self, dir: &Vec3, roughness: f64) -> Rgb {
        let b = self.specular_bracket(roughness);
        let lo = self.specular[b.lo].map.lookup(dir);
        if b.t == 0.0 {
            return lo;
        }
        let hi = self.specular[b.hi].map.lookup(dir);
        lo * (1.0 - b.t) + hi * b.t
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            diffuse: self.diffuse.scaled(s),
            specular: self
                .specular
                .iter()
                .map(|l| SpecularLevel { roughness: l.roughness, map: l.map.scaled(s) })
                .collect(),
        }
    }
}

/// Gradient buffers laid out like the texel data of a [`PrefilteredEnv`].
#[derive(Debug, Clone, PartialEq)]
pub struct PrefilteredGrad {
    pub diffuse: Vec<f64>,
    pub specular: Vec<Vec<f64>>,
}

impl PrefilteredGrad {
    pub fn zeros_like(env: &PrefilteredEnv) -> Self {
        Self {
            diffuse: vec![0.0; env.diffuse.data().len()],
            specular: env.specular.iter().map(|l| vec![0.0; l.map.data().len()]).collect(),
        }
    }

    pub fn clear(&mut self) {
        self.diffuse.iter_mut().for_each(|v| *v = 0.0);
        for l in &mut self.specular {
            l.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub(crate) fn scatter(buf: &mut [f64], taps: &Taps, g: &Rgb) {
        for &(t, w) in taps {
            if w != 0.0 {
                buf[3 * t] += w * g.x;
                buf[3 * t + 1] += w * g.y;
                buf[3 * t + 2] += w * g.z;
            }
        }
    }
}

/// Precomputed source-texel directions and `dw / pi` weights.
#[derive(Debug, Clone)]
struct DiffuseKernel {
    source_size: usize,
    out_size: usize,
    source_dirs: Vec<Vec3>,
    source_weights: Vec<f64>,
    out_dirs: Vec<Vec3>,
}

impl DiffuseKernel {
    fn new(source_size: usize, out_size: usize) -> Self {
        let src = CubeMap::black(source_size);
        let out = CubeMap::black(out_size);
        let source_dirs = (0..src.texel_count()).map(|t| src.texel_center(t)).collect();
        let source_weights = src.solid_angles().iter().map(|w| w / PI).collect();
        let out_dirs = (0..out.texel_count()).map(|t| out.texel_center(t)).collect();
        Self { source_size, out_size, source_dirs, source_weights, out_dirs }
    }

    fn apply(&self, map: &CubeMap) -> CubeMap {
        assert_eq!(map.face_size(), self.source_size);
        let src = map.data();
        let data: Vec<f64> = self
            .out_dirs
            .par_iter()
            .flat_map_iter(|n| {
                let mut acc = [0.0f64; 3];
                for (j, (l, w)) in self.source_dirs.iter().zip(&self.source_weights).enumerate() {
                    let c = n.dot(l);
                    if c > 0.0 {
                        let k = c * w;
                        acc[0] += k * src[3 * j];
                        acc[1] += k * src[3 * j + 1];
                        acc[2] += k * src[3 * j + 2];
                    }
                }
                acc
            })
            .collect();
        CubeMap::from_data(self.out_size, data).expect("irradiance of a valid map is valid")
    }

    /// Accumulate `K^T g` into `raw`.
    fn backward(&self, grad: &[f64], raw: &mut [f64]) {
        let active: Vec<(Vec3, [f64; 3])> = self
            .out_dirs
            .iter()
            .enumerate()
            .filter_map(|(k, n)| {
                let g = [grad[3 * k], grad[3 * k + 1], grad[3 * k + 2]];
                (g != [0.0; 3]).then_some((*n, g))
            })
            .collect();
        if active.is_empty() {
            return;
        }
        raw.par_chunks_mut(3).enumerate().for_each(|(j, out)| {
            let l = &self.source_dirs[j];
            let mut acc = [0.0f64; 3];
            for (n, g) in &active {
                let c = n.dot(l);
                if c > 0.0 {
                    acc[0] += c * g[0];
                    acc[1] += c * g[1];
                    acc[2] += c * g[2];
                }
            }
            let w = self.source_weights[j];
            out[0] += w * acc[0];
            out[1] += w * acc[1];
            out[2] += w * acc[2];
        });
    }
}

/// Cosine-weighted irradiance average, `E(n) = sum L(l) max(n.l, 0) dw / pi`
/// over all source texels with exact texel solid angles.
pub fn prefilter_diffuse(map: &CubeMap, out_size: usize) -> Result<CubeMap> {
    if out_size < 4 {
        return Err(Error::invalid(format!("diffuse out_size must be >= 4, got {out_size}")));
    }
    Ok(DiffuseKernel::new(map.face_size(), out_size).apply(map))
}

fn validate_levels(levels: &[(f64, usize)]) -> Result<()> {
    let Some(&(r0, _)) = levels.first() else {
        return Err(Error::invalid("specular chain needs at least one level"));
    };
    if r0 != 0.0 {
        return Err(Error::invalid("specular chain must start at roughness 0"));
    }
    for w in levels.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::invalid("specular roughness levels must strictly increase"));
        }
        if w[1].1 > w[0].1 {
            return Err(Error::invalid("specular face sizes must not increase"));
        }
    }
    if levels.iter().any(|&(r, n)| !(0.0..=1.0).contains(&r) || n == 0) {
        return Err(Error::invalid("specular level roughness must lie in [0, 1] with positive size"));
    }
    Ok(())
}

/// Compressed-row sparse matrix from source texels to level texels.
#[derive(Debug, Clone)]
struct LevelOperator {
    roughness: f64,
    face_size: usize,
    offsets: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<f64>,
    t_offsets: Vec<usize>,
    t_rows: Vec<u32>,
    t_weights: Vec<f64>,
}

impl LevelOperator {
    fn build(source: &CubeMap, roughness: f64, face_size: usize, samples: &SampleSet) -> Self {
        let level = CubeMap::black(face_size);
        let rows: Vec<Vec<(u32, f64)>> = (0..level.texel_count())
            .into_par_iter()
            .map(|t| {
                let n = level.texel_center(t);
                if roughness == 0.0 {
                    return merge_taps(source.taps(&n).iter().map(|&(i, w)| (i as u32, w)).collect());
                }
                let alpha = ggx_alpha(roughness);
                let mut entries = Vec::with_capacity(samples.len() * 4);
                let mut total = 0.0;
                for (u1, u2) in samples.iter() {
                    let h = to_world(&sample_ggx_half(u1, u2, alpha), &n);
                    let l = 2.0 * n.dot(&h) * h - n;
                    let nol = n.dot(&l);
                    if nol > 0.0 {
                        total += nol;
                        for (i, w) in source.taps(&l.normalize()) {
                            entries.push((i as u32, w * nol));
                        }
                    }
                }
                let mut merged = merge_taps(entries);
                if total > 0.0 {
                    merged.iter_mut().for_each(|e| e.1 /= total);
                }
                merged
            })
            .collect();

        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for row in &rows {
            for &(c, w) in row {
                cols.push(c);
                weights.push(w);
            }
            offsets.push(cols.len());
        }

        let n_src = source.texel_count();
        let mut counts = vec![0usize; n_src + 1];
        for &c in &cols {
            counts[c as usize + 1] += 1;
        }
        for i in 0..n_src {
            counts[i + 1] += counts[i];
        }
        let t_offsets = counts.clone();
        let mut fill = counts;
        let mut t_rows = vec![0u32; cols.len()];
        let mut t_weights = vec![0.0; cols.len()];
        for (r, row) in rows.iter().enumerate() {
            for &(c, w) in row {
                let slot = fill[c as usize];
                t_rows[slot] = r as u32;
                t_weights[slot] = w;
                fill[c as usize] += 1;
            }
        }
        Self { roughness, face_size, offsets, cols, weights, t_offsets, t_rows, t_weights }
    }

    fn apply(&self, map: &CubeMap) -> CubeMap {
        let src = map.data();
        let data: Vec<f64> = (0..self.offsets.len() - 1)
            .into_par_iter()
            .flat_map_iter(|r| {
                let mut acc = [0.0f64; 3];
                for k in self.offsets[r]..self.offsets[r + 1] {
                    let c = self.cols[k] as usize;
                    let w = self.weights[k];
                    acc[0] += w * src[3 * c];
                    acc[1] += w * src[3 * c + 1];
                    acc[2] += w * src[3 * c + 2];
                }
                acc
            })
            .collect();
        CubeMap::from_data(self.face_size, data).expect("prefiltered texels are valid")
    }

    fn backward(&self, grad: &[f64], raw: &mut [f64]) {
        raw.par_chunks_mut(3).enumerate().for_each(|(c, out)| {
            for k in self.t_offsets[c]..self.t_offsets[c + 1] {
                let r = self.t_rows[k] as usize;
                let w = self.t_weights[k];
                out[0] += w * grad[3 * r];
                out[1] += w * grad[3 * r + 1];
                out[2] += w * grad[3 * r + 2];
            }
        });
    }
}

fn merge_taps(mut entries: Vec<(u32, f64)>) -> Vec<(u32, f64)> {
    entries.sort_by_key(|e| e.0);
    let mut out: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
    for (c, w) in entries {
        match out.last_mut() {
            Some(last) if last.0 == c => last.1 += w,
            _ if w != 0.0 => out.push((c, w)),
            _ => {}
        }
    }
    out
}

/// The specular prefilter as a fixed linear map from source texels to each
/// level. Sample directions depend only on sizes, roughness, sample count and
/// seed, so the operator is built once and reused for every refresh.
#[derive(Debug, Clone)]
pub struct SpecularOperator {
    source_size: usize,
    levels: Vec<LevelOperator>,
}

impl SpecularOperator {
    pub fn new(source_size: usize, levels: &[(f64, usize)], samples: usize, seed: u64) -> Result<Self> {
        if samples < 1 {
            return Err(Error::invalid("samples_per_texel must be >= 1"));
        }
        validate_levels(levels)?;
        let source = CubeMap::black(source_size);
        let set = SampleSet::hammersley(samples, seed);
        let levels = levels
            .iter()
            .map(|&(r, n)| LevelOperator::build(&source, r, n, &set))
            .collect();
        Ok(Self { source_size, levels })
    }

    pub fn source_size(&self) -> usize {
        self.source_size
    }

    pub fn apply(&self, map: &CubeMap) -> Vec<SpecularLevel> {
        assert_eq!(map.face_size(), self.source_size, "source face size mismatch");
        self.levels
            .iter()
            .map(|op| SpecularLevel { roughness: op.roughness, map: op.apply(map) })
            .collect()
    }

    /// Accumulate the exact transpose of every level into `raw`.
    pub fn backward(&self, level_grads: &[Vec<f64>], raw: &mut [f64]) {
        for (op, g) in self.levels.iter().zip(level_grads) {
            if g.iter().any(|v| *v != 0.0) {
                op.backward(g, raw);
            }
        }
    }

    pub fn nonzeros(&self) -> usize {
        self.levels.iter().map(|l| l.cols.len()).sum()
    }
}

/// GGX-prefiltered specular chain (normal = view = reflection convention,
/// `n.l`-weighted), with deterministic seed 0.
pub fn prefilter_specular(
    map: &CubeMap,
    levels: &[(f64, usize)],
    samples_per_texel: usize,
) -> Result<Vec<SpecularLevel>> {
    Ok(SpecularOperator::new(map.face_size(), levels, samples_per_texel, 0)?.apply(map))
}

/// How gradients on specular level texels reach the raw texels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpecularGradient {
    /// Transpose of the prefilter operator.
    #[default]
    Exact,
    /// Treat each level as a plain resample of the raw map.
    StraightThrough,
}

type PrefilterKey = (usize, usize, Vec<(u64, usize)>, usize, u64);

/// Memoized [`EnvPrefilter::new`]; operators are immutable once built.
pub fn shared_prefilter(source_size: usize, settings: &PrefilterSettings) -> Result<Arc<EnvPrefilter>> {
    static CACHE: OnceLock<Mutex<HashMap<PrefilterKey, Arc<EnvPrefilter>>>> = OnceLock::new();
    let key = (
        source_size,
        settings.diffuse_size,
        settings.levels.iter().map(|&(r, s)| (r.to_bits(), s)).collect(),
        settings.samples,
        settings.seed,
    );
    let cache = CACHE.get_or_init(Default::default);
    if let Some(p) = cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
        return Ok(p.clone());
    }
    let built = Arc::new(EnvPrefilter::new(source_size, settings.clone())?);
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    Ok(guard.entry(key).or_insert(built).clone())
}

/// Cached prefilter for a fixed source size: refreshes a [`PrefilteredEnv`]
/// from raw texels and maps gradients back to them.
#[derive(Debug, Clone)]
pub struct EnvPrefilter {
    settings: PrefilterSettings,
    diffuse: DiffuseKernel,
    specular: SpecularOperator,
}

impl EnvPrefilter {
    pub fn new(source_size: usize, settings: PrefilterSettings) -> Result<Self> {
        if settings.diffuse_size < 4 {
            return Err(Error::invalid("diffuse size must be >= 4"));
        }
        let specular =
            SpecularOperator::new(source_size, &settings.levels, settings.samples, settings.seed)?;
        let diffuse = DiffuseKernel::new(source_size, settings.diffuse_size);
        Ok(Self { settings, diffuse, specular })
    }

    pub fn settings(&self) -> &PrefilterSettings {
        &self.settings
    }

    pub fn source_size(&self) -> usize {
        self.specular.source_size
    }

    pub fn apply(&self, map: &CubeMap) -> PrefilteredEnv {
        PrefilteredEnv { diffuse: self.diffuse.apply(map), specular: self.specular.apply(map) }
    }

    /// Raw-texel gradient (same layout as the source map data).
    pub fn backward(&self, grad: &PrefilteredGrad, mode: SpecularGradient) -> Vec<f64> {
        let mut raw = vec![0.0; self.diffuse.source_dirs.len() * 3];
        self.diffuse.backward(&grad.diffuse, &mut raw);
        match mode {
            SpecularGradient::Exact => self.specular.backward(&grad.specular, &mut raw),
            SpecularGradient::StraightThrough => {
                let source = CubeMap::black(self.source_size());
                for (op, g) in self.specular.levels.iter().zip(&grad.specular) {
                    let level = CubeMap::black(op.face_size);
                    for t in 0..level.texel_count() {
                        let gt = Rgb::new(g[3 * t], g[3 * t + 1], g[3 * t + 2]);
                        if gt != Rgb::zeros() {
                            PrefilteredGrad::scatter(&mut raw, &source.taps(&level.texel_center(t)), &gt);
                        }
                    }
                }
            }
        }
        raw
    }
}
