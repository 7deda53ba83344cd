use crate::math::Rgb;

/// Regularizer weights; both terms are averaged over points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerWeights {
    pub saturation: f64,
    pub energy: f64,
}

impl Default for RegularizerWeights {
    fn default() -> Self {
        Self { saturation: 0.01, energy: 0.01 }
    }
}

/// `lambda ||s - mean(s)||`; zero for achromatic tints.
pub fn loss_sat(s: &Rgb, lambda: f64) -> f64 {
    lambda * centered(s).norm()
}

/// `s - mean(s)`, exactly zero when all channels agree.
fn centered(s: &Rgb) -> Rgb {
    if s.x == s.y && s.y == s.z {
        return Rgb::zeros();
    }
    s - Rgb::repeat(s.mean())
}

/// Gradient of [`loss_sat`]; zero at the non-differentiable point `s` gray.
pub fn loss_sat_grad(s: &Rgb, lambda: f64) -> Rgb {
    let c = centered(s);
    let n = c.norm();
    if n == 0.0 {
        Rgb::zeros()
    } else {
        c * (lambda / n)
    }
}

/// `lambda max(0, ||s|| + ||b|| - 1)^2`.
pub fn loss_energy(s: &Rgb, b: &Rgb, lambda: f64) -> f64 {
    let e = (s.norm() + b.norm() - 1.0).max(0.0);
    lambda * e * e
}

/// Gradients of [`loss_energy`] with respect to `(s, b)`.
pub fn loss_energy_grad(s: &Rgb, b: &Rgb, lambda: f64) -> (Rgb, Rgb) {
    let (ns, nb) = (s.norm(), b.norm());
    let e = ns + nb - 1.0;
    if e <= 0.0 {
        return (Rgb::zeros(), Rgb::zeros());
    }
    let k = 2.0 * lambda * e;
    let unit = |v: &Rgb, n: f64| if n == 0.0 { Rgb::zeros() } else { v * (k / n) };
    (unit(s, ns), unit(b, nb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::gray;

    #[test]
    fn sat_zero_for_gray() {
        assert_eq!(loss_sat(&gray(0.3), 0.01), 0.0);
        assert_eq!(loss_sat_grad(&gray(0.3), 0.01), Rgb::zeros());
    }

    #[test]
    fn sat_reference() {
        // mean 1/3, deviations (2/3, -1/3, -1/3), norm sqrt(6)/3
        let v = loss_sat(&Rgb::new(1.0, 0.0, 0.0), 1.0);
        assert!((v - 6f64.sqrt() / 3.0).abs() < 1e-15);
    }

    #[test]
    fn energy_inactive_inside_budget() {
        assert_eq!(loss_energy(&gray(0.1), &gray(0.3), 1.0), 0.0);
        let (gs, gb) = loss_energy_grad(&gray(0.1), &gray(0.3), 1.0);
        assert_eq!(gs + gb, Rgb::zeros());
    }

    #[test]
    fn gradients_match_difference() {
        let s = Rgb::new(0.6, 0.2, 0.4);
        let b = Rgb::new(0.7, 0.5, 0.3);
        let h = 1e-7;
        let gs = loss_sat_grad(&s, 0.5);
        let (es, eb) = loss_energy_grad(&s, &b, 0.5);
        for k in 0..3 {
            let mut sp = s;
            let mut sm = s;
            sp[k] += h;
            sm[k] -= h;
            let fd = (loss_sat(&sp, 0.5) - loss_sat(&sm, 0.5)) / (2.0 * h);
            assert!((fd - gs[k]).abs() < 1e-6);
            let fd = (loss_energy(&sp, &b, 0.5) - loss_energy(&sm, &b, 0.5)) / (2.0 * h);
            assert!((fd - es[k]).abs() < 1e-6);
            let mut bp = b;
            let mut bm = b;
            bp[k] += h;
            bm[k] -= h;
            let fd = (loss_energy(&s, &bp, 0.5) - loss_energy(&s, &bm, 0.5)) / (2.0 * h);
            assert!((fd - eb[k]).abs() < 1e-6);
        }
    }
}
