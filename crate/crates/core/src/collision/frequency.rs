use std::f64::consts::PI;

use crate::quadrature;
use crate::vec3::{self, Vec3};

/// `nu(v) = int |u-v|^gamma |cos| mu(u) du domega`, reduced to a radial
/// integral: the angular part gives `2 pi` and the average of `mu` over a
/// sphere of radius `r` about `v` is `e^{-(|v|^2+r^2)/2} sinh(r|v|)/(r|v|)`.
pub fn collision_frequency(v: Vec3, gamma: f64) -> f64 {
    let s = vec3::norm(v);
    let shell = move |r: f64| {
        let x = r * s;
        let ratio = if x < 1e-8 { 1.0 - x } else { -(-2.0 * x).exp_m1() / (2.0 * x) };
        (-0.5 * (r - s) * (r - s)).exp() * ratio
    };
    let upper = s + 12.0;
    let split = upper.min(1.0);
    let mut radial = quadrature::integrate_power_weighted(shell, gamma + 2.0, split, 16, 8);
    if upper > split {
        // the shell weight is Gaussian around s; below s - 12 it is negligible
        let lower = split.max(s - 12.0);
        radial += quadrature::integrate(|r| r.powf(gamma + 2.0) * shell(r), lower, upper, 16, 64);
    }
    8.0 * PI * PI * radial
}

/// Smallest `C` with `1/C <= nu(v) / <v>^gamma <= C` over the speeds given.
pub fn frequency_envelope(speeds: &[f64], gamma: f64) -> f64 {
    speeds
        .iter()
        .map(|&s| {
            let ratio = collision_frequency([s, 0.0, 0.0], gamma) / (1.0 + s * s).powf(0.5 * gamma);
            ratio.max(1.0 / ratio)
        })
        .fold(1.0, f64::max)
}
