//! One-dimensional Gauss-Legendre rules.

use std::f64::consts::PI;

/// Nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre on `[a, b]` with `panels` equal panels.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, order: usize, panels: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let width = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        for (xi, wi) in x.iter().zip(&w) {
            acc += wi * f(lo + 0.5 * width * (xi + 1.0));
        }
    }
    acc * 0.5 * width
}

/// `int_0^upper r^power g(r) dr` for `power > -1` with `g` smooth, using the
/// substitution `r = upper * s^k` that removes the endpoint singularity.
pub fn integrate_power_weighted(g: impl Fn(f64) -> f64, power: f64, upper: f64, order: usize, panels: usize) -> f64 {
    let k = (4.0 / (power + 1.0)).max(1.0);
    integrate(
        |s| {
            if s <= 0.0 {
                return 0.0;
            }
            let r = upper * s.powf(k);
            r.powf(power) * g(r) * upper * k * s.powf(k - 1.0)
        },
        0.0,
        1.0,
        order,
        panels,
    )
}
