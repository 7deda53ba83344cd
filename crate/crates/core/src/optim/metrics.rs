//! Image reconstruction loss, PSNR and SSIM.
//!
//! SSIM uses an 11x11 Gaussian window (sigma 1.5) applied separably with
//! zero padding, `C1 = 0.01^2`, `C2 = 0.03^2`, averaged over pixels and
//! channels.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;

pub const SSIM_WEIGHT: f64 = 0.2;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;
const RADIUS: usize = 5;
const SIGMA: f64 = 1.5;

fn kernel() -> [f64; 2 * RADIUS + 1] {
    let mut k = [0.0; 2 * RADIUS + 1];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - RADIUS as f64;
        *v = (-x * x / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable zero-padded Gaussian blur of one `w x h` plane. The kernel is
/// symmetric, so this operator is its own adjoint.
fn blur(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = RADIUS as isize;
    let mut tmp = vec![0.0; w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for d in -r..=r {
                let xx = x as isize + d;
                if xx >= 0 && (xx as usize) < w {
                    acc += k[(d + r) as usize] * src[y * w + xx as usize];
                }
            }
            *out = acc;
        }
    });
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for d in -r..=r {
                let yy = y as isize + d;
                if yy >= 0 && (yy as usize) < h {
                    acc += k[(d + r) as usize] * tmp[yy as usize * w + x];
                }
            }
            *o = acc;
        }
    });
    out
}

fn plane(img: &Image, c: usize) -> Vec<f64> {
    img.data().iter().skip(c).step_by(3).copied().collect()
}

fn check_shapes(a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::invalid(format!(
            "image shapes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Mean SSIM and, if requested, its gradient with respect to `x`.
fn ssim_impl(x: &Image, y: &Image, want_grad: bool) -> (f64, Option<Vec<f64>>) {
    let (w, h) = (x.width(), x.height());
    let n = w * h;
    let k = kernel();
    let mut total = 0.0;
    let mut grad = want_grad.then(|| vec![0.0; 3 * n]);
    let norm = 1.0 / (3 * n) as f64;
    for c in 0..3 {
        let (px, py) = (plane(x, c), plane(y, c));
        let mx = blur(&px, w, h, &k);
        let my = blur(&py, w, h, &k);
        let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).collect::<Vec<_>>();
        let exx = blur(&sq(&px, &px), w, h, &k);
        let eyy = blur(&sq(&py, &py), w, h, &k);
        let exy = blur(&sq(&px, &py), w, h, &k);
        let mut g_mu = vec![0.0; n];
        let mut g_xx = vec![0.0; n];
        let mut g_xy = vec![0.0; n];
        for i in 0..n {
            let (ux, uy) = (mx[i], my[i]);
            let a1 = 2.0 * ux * uy + C1;
            let a2 = 2.0 * (exy[i] - ux * uy) + C2;
            let b1 = ux * ux + uy * uy + C1;
            let b2 = (exx[i] - ux * ux) + (eyy[i] - uy * uy) + C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            if want_grad {
                g_mu[i] = norm * s * (2.0 * uy / a1 - 2.0 * uy / a2 - 2.0 * ux / b1 + 2.0 * ux / b2);
                g_xy[i] = norm * s * 2.0 / a2;
                g_xx[i] = -norm * s / b2;
            }
        }
        if let Some(g) = grad.as_mut() {
            let (bm, bxx, bxy) = (blur(&g_mu, w, h, &k), blur(&g_xx, w, h, &k), blur(&g_xy, w, h, &k));
            for i in 0..n {
                g[3 * i + c] = bm[i] + 2.0 * px[i] * bxx[i] + py[i] * bxy[i];
            }
        }
    }
    (total * norm, grad)
}

pub fn metrics_ssim(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    Ok(ssim_impl(a, b, false).0)
}

/// `10 log10(1 / MSE)`; `+inf` for identical images.
pub fn metrics_psnr(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data().len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

/// `0.8 L1 + 0.2 (1 - SSIM)`.
pub fn image_loss(rendered: &Image, target: &Image) -> Result<f64> {
    check_shapes(rendered, target)?;
    let l1 = rendered.data().iter().zip(target.data()).map(|(x, y)| (x - y).abs()).sum::<f64>()
        / rendered.data().len() as f64;
    let ssim = ssim_impl(rendered, target, false).0;
    Ok((1.0 - SSIM_WEIGHT) * l1 + SSIM_WEIGHT * (1.0 - ssim))
}

/// [`image_loss`] and its gradient with respect to `rendered`.
pub fn image_loss_grad(rendered: &Image, target: &Image) -> Result<(f64, Vec<f64>)> {
    check_shapes(rendered, target)?;
    let len = rendered.data().len() as f64;
    let (ssim, g_ssim) = ssim_impl(rendered, target, true);
    let g_ssim = g_ssim.expect("gradient requested");
    let mut l1 = 0.0;
    let grad = rendered
        .data()
        .iter()
        .zip(target.data())
        .zip(&g_ssim)
        .map(|((x, y), gs)| {
            let d = x - y;
            l1 += d.abs();
            let sign = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            (1.0 - SSIM_WEIGHT) * sign / len - SSIM_WEIGHT * gs
        })
        .collect();
    Ok(((1.0 - SSIM_WEIGHT) * l1 / len + SSIM_WEIGHT * (1.0 - ssim), grad))
}
