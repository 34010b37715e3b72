//! Global Maxwellian, the time-dependent velocity weight
//! `w(t, v) = exp(theta_tilde(t) |v|^2)`, and the effective frequency seen by
//! the weighted unknown `h = w f`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightParams {
    /// Base weight strength; must be small (at most 1/8).
    pub vartheta: f64,
    /// Decay rate of the weight excess.
    pub theta: f64,
    /// Soft-potential exponent, shared with the collision kernel.
    pub gamma: f64,
}

impl Default for WeightParams {
    fn default() -> Self {
        Self { vartheta: 0.01, theta: 1.0, gamma: -1.0 }
    }
}

impl WeightParams {
    pub fn new(vartheta: f64, theta: f64, gamma: f64) -> Result<Self> {
        let p = Self { vartheta, theta, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > -3.0 && self.gamma < 0.0) {
            return Err(Error::InvalidParams(format!("gamma = {} must lie in (-3, 0)", self.gamma)));
        }
        if !(self.vartheta > 0.0 && self.vartheta <= 0.125) {
            return Err(Error::InvalidParams(format!("vartheta = {} must lie in (0, 1/8]", self.vartheta)));
        }
        if !(self.theta > 0.0) {
            return Err(Error::InvalidParams(format!("theta = {} must be positive", self.theta)));
        }
        rho_exponent(self.gamma, self.theta).map(|_| ())
    }

    pub fn rho(&self) -> f64 {
        (self.theta * self.gamma + 2.0) / (2.0 - self.gamma)
    }
}

#[inline]
pub fn maxwellian(v: Vec3) -> f64 {
    (-0.5 * vec3::norm2(v)).exp()
}

#[inline]
pub fn sqrt_maxwellian(v: Vec3) -> f64 {
    (-0.25 * vec3::norm2(v)).exp()
}

pub fn theta_tilde(t: f64, p: &WeightParams) -> f64 {
    p.vartheta * (1.0 + (1.0 + t).powf(-p.theta))
}

pub fn weight(t: f64, v: Vec3, p: &WeightParams) -> f64 {
    (theta_tilde(t, p) * vec3::norm2(v)).exp()
}

/// `-d_t w / w = vartheta theta |v|^2 (1+t)^(-theta-1)`, nonnegative.
pub fn weight_time_decay(t: f64, v: Vec3, p: &WeightParams) -> f64 {
    p.vartheta * p.theta * vec3::norm2(v) * (1.0 + t).powf(-p.theta - 1.0)
}

/// Decay exponent `(theta gamma + 2) / (2 - gamma)`.
pub fn rho_exponent(gamma: f64, theta: f64) -> Result<f64> {
    let num = theta * gamma + 2.0;
    if num <= 0.0 {
        return Err(Error::InvalidParams(format!("theta * gamma + 2 = {num} must be positive")));
    }
    Ok(num / (2.0 - gamma))
}

/// Effective frequency `nu + v/2 . grad_phi + grad_phi . (2 theta_tilde v) - d_t w / w`.
pub fn nu_tilde(t: f64, v: Vec3, grad_phi: Vec3, p: &WeightParams, nu: f64) -> f64 {
    let drift = vec3::dot(v, grad_phi) * (0.5 + 2.0 * theta_tilde(t, p));
    nu + drift + weight_time_decay(t, v, p)
}

/// `int_s^t nu_tilde(tau) d tau` for a field-free run and constant `nu`.
pub fn nu_tilde_integral_free(s: f64, t: f64, v: Vec3, p: &WeightParams, nu: f64) -> f64 {
    nu * (t - s) + p.vartheta * vec3::norm2(v) * ((1.0 + s).powf(-p.theta) - (1.0 + t).powf(-p.theta))
}

/// Outcome of the sufficient positivity test for `nu_tilde`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityCheck {
    /// `sup_t e^{lambda t^rho} |grad_phi(t)|_inf` over the supplied samples.
    pub field_smallness: f64,
    /// `vartheta * theta`.
    pub margin: f64,
    pub holds: bool,
}

/// Checks `vartheta theta > sup_t e^{lambda t^rho} |grad_phi(t)|_inf` over a
/// sampled field history `(t, |grad_phi|_inf)`.
pub fn positivity_condition(history: &[(f64, f64)], lambda: f64, p: &WeightParams) -> PositivityCheck {
    let rho = p.rho();
    let field_smallness = history
        .iter()
        .map(|&(t, g)| (lambda * t.max(0.0).powf(rho)).exp() * g)
        .fold(0.0, f64::max);
    let margin = p.vartheta * p.theta;
    PositivityCheck { field_smallness, margin, holds: margin > field_smallness }
}

/// Largest `c` with `nu_tilde >= c (1+t)^(rho-1)` over the samples
/// `(t, nu_tilde)`.
pub fn fit_lower_bound_constant(samples: &[(f64, f64)], p: &WeightParams) -> f64 {
    let rho = p.rho();
    samples
        .iter()
        .map(|&(t, nt)| nt / (1.0 + t).powf(rho - 1.0))
        .fold(f64::INFINITY, f64::min)
}

/// Smallest `C` with `exp(-int_s^t nu_tilde) <= C e^{lambda (s^rho - t^rho)}`
/// over a grid of `0 <= s <= t <= t_max`, field free.
pub fn stretched_decay_constant(v: Vec3, nu: f64, lambda: f64, t_max: f64, n: usize, p: &WeightParams) -> f64 {
    let rho = p.rho();
    let grid: Vec<f64> = (0..=n).map(|k| t_max * k as f64 / n as f64).collect();
    let mut worst: f64 = 1.0;
    for (j, &t) in grid.iter().enumerate() {
        for &s in &grid[..=j] {
            let lhs = -nu_tilde_integral_free(s, t, v, p, nu);
            let rhs = lambda * (s.powf(rho) - t.powf(rho));
            worst = worst.max((lhs - rhs).exp());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maxwellian_values() {
        assert_eq!(maxwellian([0.0; 3]), 1.0);
        assert!((maxwellian([1.0, 1.0, 0.0]) - (-1.0f64).exp()).abs() < 1e-15);
        let v = [0.3, -1.2, 0.7];
        assert!((sqrt_maxwellian(v).powi(2) - maxwellian(v)).abs() < 1e-15);
    }

    #[test]
    fn weight_examples() {
        let p = WeightParams::default();
        assert!((theta_tilde(0.0, &p) - 0.02).abs() < 1e-15);
        assert!((weight(0.0, [2.0, 0.0, 0.0], &p) - 0.08f64.exp()).abs() < 1e-12);
        assert!((weight(0.0, [2.0, 0.0, 0.0], &p) - 1.08329).abs() < 1e-5);
        assert!((theta_tilde(1e12, &p) - p.vartheta).abs() < 1e-12);
        assert_eq!(weight(7.0, [0.0; 3], &p), 1.0);
    }

    #[test]
    fn rho_examples() {
        assert!((rho_exponent(-1.0, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((rho_exponent(-0.5, 2.0).unwrap() - 0.4).abs() < 1e-15);
        assert!(matches!(rho_exponent(-1.0, 2.0), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn nu_tilde_examples() {
        let p = WeightParams::default();
        let v = [1.0, 2.0, -0.5];
        let nt = nu_tilde(0.5, v, [0.0; 3], &p, 3.0);
        let expected = 3.0 + p.vartheta * p.theta * vec3::norm2(v) / 1.5f64.powf(2.0);
        assert!((nt - expected).abs() < 1e-14);
        assert!(nt > 3.0);
        assert_eq!(nu_tilde(2.0, [0.0; 3], [0.1, 0.2, 0.0], &p, 5.0), 5.0);
    }

    #[test]
    fn free_integral_matches_quadrature() {
        let p = WeightParams::default();
        let v = [2.0, 1.0, 0.0];
        let (s, t, nu) = (0.3, 2.7, 0.8);
        let n = 20_000;
        let h = (t - s) / n as f64;
        let mut q = 0.0;
        for k in 0..n {
            let tau = s + (k as f64 + 0.5) * h;
            q += h * nu_tilde(tau, v, [0.0; 3], &p, nu);
        }
        assert!((q - nu_tilde_integral_free(s, t, v, &p, nu)).abs() < 1e-8);
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(WeightParams::new(0.2, 1.0, -1.0).is_err());
        assert!(WeightParams::new(0.01, 1.0, -3.5).is_err());
        assert!(WeightParams::new(0.01, 2.0, -1.0).is_err());
        assert!(WeightParams::new(0.01, 1.0, -1.0).is_ok());
    }

    #[test]
    fn positivity_condition_flags_large_fields() {
        let p = WeightParams::default();
        let small = positivity_condition(&[(0.0, 1e-4), (1.0, 5e-5)], 0.1, &p);
        assert!(small.holds);
        let big = positivity_condition(&[(0.0, 1e-4), (1.0, 0.5)], 0.1, &p);
        assert!(!big.holds);
    }

    #[test]
    fn stretched_decay_constant_is_moderate() {
        let p = WeightParams::default();
        let c = stretched_decay_constant([1.0, 0.0, 0.0], 0.5, 0.4, 20.0, 200, &p);
        assert!(c.is_finite() && c >= 1.0 && c < 3.0, "{c}");
    }

    proptest::proptest! {
        #[test]
        fn weight_is_sandwiched(t in 0.0f64..1e3, vx in -8.0f64..8.0, vy in -8.0f64..8.0, vz in -8.0f64..8.0) {
            let p = WeightParams::default();
            let v = [vx, vy, vz];
            let w = weight(t, v, &p);
            let lo = (p.vartheta * vec3::norm2(v)).exp();
            let hi = (2.0 * p.vartheta * vec3::norm2(v)).exp();
            proptest::prop_assert!(lo <= w * (1.0 + 1e-15) && w <= hi * (1.0 + 1e-15));
            proptest::prop_assert!(sqrt_maxwellian(v) <= 1.0 / lo * (1.0 + 1e-15));
        }

        #[test]
        fn field_free_propagators_are_bounded(t in 0.0f64..30.0, vx in -6.0f64..6.0, nu in 0.01f64..100.0) {
            let p = WeightParams::default();
            let v = [vx, 0.5, -0.25];
            let n = 400;
            let mut acc = 0.0;
            for k in 0..n {
                let s = t * (k as f64 + 0.5) / n as f64;
                let int = nu_tilde_integral_free(s, t, v, &p, nu);
                proptest::prop_assert!((-int).exp() <= 1.0 + 1e-15);
                acc += t / n as f64 * (-0.5 * int).exp() * nu_tilde(s, v, [0.0; 3], &p, nu);
            }
            proptest::prop_assert!(acc <= 2.0 + 1e-2, "{}", acc);
        }
    }
}
