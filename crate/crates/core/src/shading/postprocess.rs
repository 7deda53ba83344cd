use std::fmt;
use std::str::FromStr;

use crate::envmap::CubeMap;
use crate::error::{Error, Result};
use crate::math::Rgb;

const GAMMA: f64 = 2.2;
/// Floor on the gamma input inside the derivative; the curve is vertical at 0.
const GAMMA_DERIV_FLOOR: f64 = 1e-8;

/// How radiance and environment values are bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RangeMode {
    /// Environments are clamped to `[0, 1]`.
    Unit,
    /// Environments are only clamped below at 0.
    NonNegative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tonemap {
    None,
    Clip,
    Reinhard,
    Aces,
}

/// Radiance-to-display mapping. Output always lies in `[0, 1]`; with
/// `Tonemap::None` values above 1 saturate at the display clamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PostProcessConfig {
    pub range: RangeMode,
    pub tonemap: Tonemap,
    pub gamma: bool,
}

impl Default for PostProcessConfig {
    fn default() -> Self {
        Self::recommended()
    }
}

impl PostProcessConfig {
    pub const fn new(range: RangeMode, tonemap: Tonemap, gamma: bool) -> Self {
        Self { range, tonemap, gamma }
    }

    /// Non-negative range, clip tonemap, gamma on.
    pub const fn recommended() -> Self {
        Self::new(RangeMode::NonNegative, Tonemap::Clip, true)
    }

    /// Ablation rows, recommended first.
    pub fn ablation_rows() -> Vec<PostProcessConfig> {
        use RangeMode::*;
        vec![
            Self::new(NonNegative, Tonemap::Clip, true),
            Self::new(NonNegative, Tonemap::Clip, false),
            Self::new(Unit, Tonemap::None, true),
            Self::new(Unit, Tonemap::None, false),
            Self::new(NonNegative, Tonemap::Reinhard, true),
            Self::new(NonNegative, Tonemap::Aces, true),
        ]
    }
}

fn tonemap(x: f64, t: Tonemap) -> (f64, f64) {
    match t {
        Tonemap::None | Tonemap::Clip => {
            if x > 1.0 {
                (1.0, 0.0)
            } else {
                (x, 1.0)
            }
        }
        Tonemap::Reinhard => (x / (1.0 + x), 1.0 / ((1.0 + x) * (1.0 + x))),
        Tonemap::Aces => {
            let (a, b, c, d, e) = (2.51, 0.03, 2.43, 0.59, 0.14);
            let num = x * (a * x + b);
            let den = x * (c * x + d) + e;
            let y = num / den;
            if y > 1.0 {
                return (1.0, 0.0);
            }
            let dnum = 2.0 * a * x + b;
            let dden = 2.0 * c * x + d;
            (y, (dnum * den - num * dden) / (den * den))
        }
    }
}

fn channel(x: f64, cfg: &PostProcessConfig) -> (f64, f64) {
    let (y, dy) = tonemap(x.max(0.0), cfg.tonemap);
    let (y, dy) = if y < 0.0 { (0.0, 0.0) } else { (y, dy) };
    let dy = if x < 0.0 { 0.0 } else { dy };
    if !cfg.gamma {
        return (y, dy);
    }
    let g = y.powf(1.0 / GAMMA);
    let dg = (1.0 / GAMMA) * y.max(GAMMA_DERIV_FLOOR).powf(1.0 / GAMMA - 1.0);
    (g, dg * dy)
}

/// Map linear radiance to display values in `[0, 1]`.
pub fn postprocess(l: &Rgb, cfg: &PostProcessConfig) -> Result<Rgb> {
    if l.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("radiance {l:?}")));
    }
    if l.iter().any(|&x| x < 0.0) {
        return Err(Error::invalid(format!("negative radiance {l:?}")));
    }
    Ok(l.map(|x| channel(x, cfg).0))
}

/// Per-channel derivative of [`postprocess`]. Negative inputs get 0.
pub fn postprocess_derivative(l: &Rgb, cfg: &PostProcessConfig) -> Rgb {
    l.map(|x| channel(x, cfg).1)
}

/// Value and derivative in one pass, without input validation.
pub(crate) fn postprocess_with_derivative(l: &Rgb, cfg: &PostProcessConfig) -> (Rgb, Rgb) {
    let mut v = Rgb::zeros();
    let mut d = Rgb::zeros();
    for k in 0..3 {
        let (a, b) = channel(l[k], cfg);
        v[k] = a;
        d[k] = b;
    }
    (v, d)
}

/// Bring an HDR environment into the configured range.
pub fn preprocess_hdr_for_config(map: &CubeMap, cfg: &PostProcessConfig) -> CubeMap {
    let mut out = map.clone();
    match cfg.range {
        RangeMode::Unit => out.project_unit(),
        RangeMode::NonNegative => out.project_nonnegative(),
    }
    out
}

impl fmt::Display for RangeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RangeMode::Unit => "unit",
            RangeMode::NonNegative => "nonneg",
        })
    }
}

impl FromStr for RangeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(RangeMode::Unit),
            "nonneg" | "nonnegative" => Ok(RangeMode::NonNegative),
            _ => Err(Error::invalid(format!("unknown range mode '{s}'"))),
        }
    }
}

impl fmt::Display for Tonemap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tonemap::None => "none",
            Tonemap::Clip => "clip",
            Tonemap::Reinhard => "reinhard",
            Tonemap::Aces => "aces",
        })
    }
}

impl FromStr for Tonemap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Tonemap::None),
            "clip" => Ok(Tonemap::Clip),
            "reinhard" => Ok(Tonemap::Reinhard),
            "aces" => Ok(Tonemap::Aces),
            _ => Err(Error::invalid(format!("unknown tonemap '{s}'"))),
        }
    }
}

impl fmt::Display for PostProcessConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = if self.gamma { "gamma" } else { "linear" };
        write!(f, "{}-{}-{}", self.range, self.tonemap, g)
    }
}

/// Parses `range-tonemap-gamma|linear`, e.g. `nonneg-clip-gamma`.
impl FromStr for PostProcessConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('-').collect();
        if parts.len() != 3 {
            return Err(Error::invalid(format!("expected range-tonemap-gamma, got '{s}'")));
        }
        let gamma = match parts[2] {
            "gamma" => true,
            "linear" => false,
            g => return Err(Error::invalid(format!("expected gamma or linear, got '{g}'"))),
        };
        Ok(Self::new(parts[0].parse()?, parts[1].parse()?, gamma))
    }
}
