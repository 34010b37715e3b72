//! Pointwise gain kernel `k2(v, u)`, its Gaussian envelope, and the
//! certified bound on the part of `K` cut away by `chi`.

use std::f64::consts::PI;

use super::lattice_op::{one_minus_chi_moment, LatticeCollision};
use super::{angular_kernel, chi, collision_frequency, post_collision};
use crate::error::Result;
use crate::quadrature;
use crate::sphere::SphereRule;
use crate::vec3::{self, Vec3};
use crate::weights::{sqrt_maxwellian, theta_tilde, weight, WeightParams};

/// `I0(x) e^{-x}` for `x >= 0` (polynomial fits, relative error below 2e-7).
fn bessel_i0_scaled(x: f64) -> f64 {
    if x <= 3.75 {
        let t = (x / 3.75).powi(2);
        let i0 = 1.0 + t * (3.5156229 + t * (3.0899424 + t * (1.2067492 + t * (0.2659732 + t * (0.0360768 + t * 0.0045813)))));
        i0 * (-x).exp()
    } else {
        let t = 3.75 / x;
        let p = 0.39894228
            + t * (0.01328592
                + t * (0.00225319
                    + t * (-0.00157565 + t * (0.00916281 + t * (-0.02057706 + t * (0.02635537 + t * (-0.01647633 + t * 0.00392377)))))));
        p / x.sqrt()
    }
}

/// Gain kernel with `K2 f = int k2(v, u) f(u) du`, reduced to a radial
/// integral over the plane orthogonal to `u - v`.
pub fn eval_k2(v: Vec3, u: Vec3, gamma: f64) -> f64 {
    let rel = vec3::sub(u, v);
    let g = vec3::norm(rel);
    if g == 0.0 {
        return f64::INFINITY;
    }
    let e = vec3::scale(rel, 1.0 / g);
    let m = vec3::scale(vec3::add(u, v), 0.5);
    let m_perp = vec3::axpy(m, -vec3::dot(m, e), e);
    let mp = vec3::norm(m_perp);
    let base = -0.25 * (vec3::norm2(u) + vec3::norm2(v)) + 0.5 * mp * mp;
    let integrand = |r: f64| {
        (g * g + r * r).powf(0.5 * (gamma - 1.0)) * (base - 0.5 * (r - mp) * (r - mp)).exp() * bessel_i0_scaled(r * mp) * r
    };
    let upper = mp + 10.0;
    let knee = (4.0 * g).min(upper);
    let mut acc = quadrature::integrate(integrand, 0.0, knee, 16, 4);
    if upper > knee {
        acc += quadrature::integrate(integrand, knee, upper, 16, 20);
    }
    8.0 * PI / g * acc
}

/// `chi(|u - v|) k2(v, u)`: vanishes for `|u - v| <= eps`.
pub fn eval_k2_chi(v: Vec3, u: Vec3, gamma: f64, eps: f64) -> f64 {
    let c = chi(vec3::norm(vec3::sub(u, v)), eps);
    if c == 0.0 {
        0.0
    } else {
        c * eval_k2(v, u, gamma)
    }
}

/// The same kernel by direct polar quadrature over the orthogonal plane,
/// without the Bessel reduction.
pub fn eval_k2_plane_quadrature(v: Vec3, u: Vec3, gamma: f64, radial_panels: usize, angles: usize) -> f64 {
    let rel = vec3::sub(u, v);
    let g = vec3::norm(rel);
    let (t1, t2) = vec3::tangent_frame(vec3::scale(rel, 1.0 / g));
    let reach = vec3::norm(vec3::scale(vec3::add(u, v), 0.5)) + 12.0;
    let ring = |r: f64| {
        let mut acc = 0.0;
        for k in 0..angles {
            let phi = 2.0 * PI * k as f64 / angles as f64;
            let eta = vec3::add(vec3::scale(t1, r * phi.cos()), vec3::scale(t2, r * phi.sin()));
            acc += sqrt_maxwellian(vec3::add(u, eta)) * sqrt_maxwellian(vec3::add(v, eta));
        }
        acc * 2.0 * PI / angles as f64 * (g * g + r * r).powf(0.5 * (gamma - 1.0)) * r
    };
    let knee = (4.0 * g).min(reach);
    let mut acc = quadrature::integrate(ring, 0.0, knee, 16, radial_panels);
    acc += quadrature::integrate(ring, knee, reach, 16, 4 * radial_panels);
    4.0 / g * acc
}

/// Gaussian envelope `exp(-s2/8 |u-v|^2 - s1/8 (|v|^2-|u|^2)^2/|u-v|^2) / (|u-v| (1+|v|+|u|)^(1-gamma))`.
pub fn k2_bound(v: Vec3, u: Vec3, gamma: f64, s1: f64, s2: f64) -> f64 {
    let g2 = vec3::norm2(vec3::sub(u, v));
    let de = vec3::norm2(v) - vec3::norm2(u);
    let expo = -s2 / 8.0 * g2 - s1 / 8.0 * de * de / g2;
    expo.exp() / (g2.sqrt() * (1.0 + vec3::norm(v) + vec3::norm(u)).powf(1.0 - gamma))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeFit {
    /// Smallest constant covering every calibration sample.
    pub constant: f64,
    /// Largest `value / (constant * bound) - 1` over the checked samples.
    pub max_excess: f64,
}

/// Fits `value <= C bound` on `calibration` and reports the worst excess on `check`.
pub fn fit_envelope(calibration: &[(f64, f64)], check: &[(f64, f64)]) -> EnvelopeFit {
    let constant = calibration.iter().map(|(v, b)| v / b).fold(0.0, f64::max);
    let max_excess = check.iter().map(|(v, b)| v / (constant * b) - 1.0).fold(f64::NEG_INFINITY, f64::max);
    EnvelopeFit { constant, max_excess }
}

/// `int k2_chi(v, u) du`. The kernel is invariant under rotations about `v`,
/// so one azimuthal sample suffices.
pub fn k2_row_integral(v: Vec3, gamma: f64, eps: f64) -> f64 {
    let s = vec3::norm(v);
    let axis = if s > 0.0 { vec3::scale(v, 1.0 / s) } else { [1.0, 0.0, 0.0] };
    let (t1, _) = vec3::tangent_frame(axis);
    let (cx, cw) = quadrature::gauss_legendre(24);
    let shell = |rho: f64| {
        let mut acc = 0.0;
        for (c, w) in cx.iter().zip(&cw) {
            let sn = (1.0 - c * c).sqrt();
            let dir = vec3::add(vec3::scale(axis, *c), vec3::scale(t1, sn));
            acc += w * eval_k2_chi(v, vec3::axpy(v, rho, dir), gamma, eps);
        }
        2.0 * PI * rho * rho * acc
    };
    quadrature::integrate(shell, eps, 2.0 * eps, 8, 2) + quadrature::integrate(shell, 2.0 * eps, 2.0 * eps + 14.0, 16, 16)
}

/// `int |w|^gamma (1 - chi(|w|)) b0 dw domega = 8 pi^2 int r^{gamma+2} (1-chi) dr`,
/// which scales exactly as `eps^{gamma+3}`.
pub fn one_minus_chi_radial_mass(gamma: f64, eps: f64) -> f64 {
    8.0 * PI * PI * one_minus_chi_moment(gamma, eps)
}

/// Certified bound `B(v)` with `w K^{1-chi}(|h|/w)(v) <= B(v) |h|_inf`.
///
/// All of `u, u', v'` lie within `2 eps` of `v` on the support of `1 - chi`,
/// so the Maxwellian and weight factors are bounded by their extremes on that
/// ball.
pub fn k_one_minus_chi_certificate(v: Vec3, gamma: f64, eps: f64, t: f64, wp: &WeightParams) -> f64 {
    let near = (vec3::norm(v) - 2.0 * eps).max(0.0);
    let tt = theta_tilde(t, wp);
    let sqrt_mu_over_w = (-(0.25 + tt) * near * near).exp();
    let sqrt_mu_max = (-0.25 * near * near).exp();
    let k1 = sqrt_maxwellian(v) * sqrt_mu_over_w;
    let k2 = 2.0 * sqrt_mu_max * sqrt_mu_max;
    weight(t, v, wp) * one_minus_chi_radial_mass(gamma, eps) * (k1 + k2)
}

/// `w (K2^{1-chi} + K1^{1-chi})(|h|/w)(v)` by direct quadrature over the
/// ball `|u - v| <= 2 eps`.
pub fn k_one_minus_chi_direct(v: Vec3, gamma: f64, eps: f64, t: f64, wp: &WeightParams, h: impl Fn(Vec3) -> f64) -> f64 {
    let rule = SphereRule::lebedev(50).expect("order 50 exists");
    let hw = |x: Vec3| h(x).abs() / weight(t, x, wp);
    let shell = |r: f64| {
        let mut acc = 0.0;
        for (dir, wd) in rule.points.iter().zip(&rule.weights) {
            let u = vec3::axpy(v, r, *dir);
            for (om, wo) in rule.points.iter().zip(&rule.weights) {
                let b = angular_kernel(*dir, *om);
                if b == 0.0 {
                    continue;
                }
                let (u1, v1) = post_collision(u, v, *om);
                let gain = sqrt_maxwellian(u) * (hw(u1) * sqrt_maxwellian(v1) + hw(v1) * sqrt_maxwellian(u1));
                let loss = sqrt_maxwellian(v) * sqrt_maxwellian(u) * hw(u);
                acc += wd * wo * b * (gain + loss);
            }
        }
        acc * (1.0 - chi(r, eps))
    };
    weight(t, v, wp) * quadrature::integrate_power_weighted(shell, gamma + 2.0, 2.0 * eps, 16, 4)
}

/// `|nu^{-1} w Gamma(f, f)|_inf / |w f|_inf^2` on the lattice.
pub fn gamma_bound_ratio(op: &LatticeCollision, f: &[f64], t: f64, wp: &WeightParams) -> Result<f64> {
    let g = op.apply_gamma(f, f)?;
    let lat = op.lattice();
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for i in 0..lat.len() {
        let v = lat.node(i);
        let w = weight(t, v, wp);
        num = num.max((w * g[i] / collision_frequency(v, op.params().gamma)).abs());
        den = den.max((w * f[i]).abs());
    }
    Ok(if den == 0.0 { 0.0 } else { num / (den * den) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_values() {
        assert!((bessel_i0_scaled(0.0) - 1.0).abs() < 1e-12);
        assert!((bessel_i0_scaled(1.0) - 1.2660658777520082 * (-1.0f64).exp()).abs() < 1e-7);
        assert!((bessel_i0_scaled(10.0) - 2815.716628466254 * (-10.0f64).exp()).abs() < 1e-7 * 0.13);
    }

    #[test]
    fn k2_vanishes_inside_cutoff() {
        let eps = 0.01;
        assert_eq!(eval_k2_chi([0.3, 0.0, 0.0], [0.3 + 0.5 * eps, 0.0, 0.0], -1.0, eps), 0.0);
    }

    #[test]
    fn k2_matches_plane_quadrature() {
        let eps = 0.01;
        let v = [0.4, -0.3, 0.2];
        let u = vec3::axpy(v, 4.0 * eps, [1.0, 0.0, 0.0]);
        let a = eval_k2_chi(v, u, -1.0, eps);
        let b = eval_k2_plane_quadrature(v, u, -1.0, 16, 128);
        assert!((a - b).abs() < 0.01 * b, "{a} vs {b}");
        for (v, u) in [([1.0, 0.5, 0.0], [-0.5, 1.5, 0.7]), ([2.0, 0.0, 0.0], [0.0, 2.0, 0.0])] {
            let a = eval_k2(v, u, -1.5);
            let b = eval_k2_plane_quadrature(v, u, -1.5, 16, 128);
            assert!((a - b).abs() < 1e-4 * b, "{a} vs {b}");
        }
    }

    #[test]
    fn k2_is_symmetric() {
        let v = [0.7, -0.2, 1.1];
        let u = [-0.3, 0.9, 0.4];
        let a = eval_k2(v, u, -1.0);
        let b = eval_k2(u, v, -1.0);
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn certificate_scales_with_eps() {
        let wp = WeightParams::default();
        let v = [0.5, 0.2, 0.0];
        let a = k_one_minus_chi_certificate(v, -1.0, 0.02, 0.0, &wp);
        let b = k_one_minus_chi_certificate(v, -1.0, 0.01, 0.0, &wp);
        assert!((a / b / 4.0 - 1.0).abs() < 0.05, "{}", a / b);
    }

    #[test]
    fn certificate_dominates_direct_value() {
        let wp = WeightParams::default();
        for &v in &[[0.0, 0.0, 0.0], [1.0, -0.5, 0.3], [3.0, 0.0, 1.0]] {
            let cert = k_one_minus_chi_certificate(v, -1.0, 0.05, 0.0, &wp);
            let direct = k_one_minus_chi_direct(v, -1.0, 0.05, 0.0, &wp, |_| 1.0);
            assert!(direct <= cert && direct > 0.2 * cert, "{direct} vs {cert}");
        }
    }

    #[test]
    fn envelope_fit() {
        let fit = fit_envelope(&[(1.0, 2.0), (3.0, 2.0)], &[(2.0, 2.0), (3.3, 2.0)]);
        assert_eq!(fit.constant, 1.5);
        assert!((fit.max_excess - 0.1).abs() < 1e-12);
    }
}
