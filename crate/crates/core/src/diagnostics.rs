//! Weighted norms, decay fits, the alpha-weighted derivative norm, the
//! hydrodynamic coercivity probe, and the per-step run-history record.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::collision::LatticeCollision;
use crate::error::{Error, Result};
use crate::field::PotentialField;
use crate::kinematics::{kinetic_weight, KineticWeightParams, TraceOptions};
use crate::lattice::VelocityLattice;
use crate::solver::DistributionField;
use crate::vec3::{self, Vec3};
use crate::weights::{weight, WeightParams};

/// Velocity weight applied pointwise before taking a norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightSpec {
    Unit,
    /// `exp(c |v|^2)`.
    Static(f64),
    /// `w(t, v)` with the decaying exponent.
    Dynamic(WeightParams),
}

impl WeightSpec {
    pub fn at(&self, t: f64, v: Vec3) -> f64 {
        match self {
            WeightSpec::Unit => 1.0,
            WeightSpec::Static(c) => (c * vec3::norm2(v)).exp(),
            WeightSpec::Dynamic(p) => weight(t, v, p),
        }
    }
}

fn lp_accumulate(values: impl Iterator<Item = (f64, f64)>, p: f64) -> f64 {
    // (value, measure) pairs.
    if p.is_infinite() {
        return values.map(|(x, _)| x.abs()).fold(0.0, f64::max);
    }
    let s: f64 = values.map(|(x, m)| x.abs().powf(p) * m).sum();
    s.powf(1.0 / p)
}

/// `|w f|_{L^p(Omega x R^3)}` by lattice quadrature; `p = inf` is the max.
pub fn weighted_norm(f: &DistributionField, w: &WeightSpec, p: f64) -> f64 {
    let grid = &f.grid;
    let nodes = grid.velocity.nodes();
    let dv = grid.velocity.cell_volume();
    let vol = grid.space.volumes();
    let wv: Vec<f64> = nodes.iter().map(|v| w.at(f.time, *v)).collect();
    let nv = nodes.len();
    lp_accumulate(f.values.iter().enumerate().map(|(idx, x)| (wv[idx % nv] * x, vol[idx / nv] * dv)), p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Outgoing,
    Incoming,
}

/// `|w f|_{p, +/-}` with measure `|n . v| dS dv` on the chosen side.
pub fn boundary_norm(f: &DistributionField, w: &WeightSpec, p: f64, side: Side) -> f64 {
    let grid = &f.grid;
    let nodes = grid.velocity.nodes();
    let dv = grid.velocity.cell_volume();
    let area = match grid.space.geometry.kind {
        crate::domain::DomainKind::Slab { .. } => 1.0,
        crate::domain::DomainKind::Ball { radius } => 4.0 * std::f64::consts::PI * radius * radius,
    };
    let mut items = Vec::new();
    for i in crate::solver::boundary_nodes(grid) {
        let x = grid.space.position(i);
        let n = grid.space.geometry.normal_unchecked(x);
        for (k, v) in nodes.iter().enumerate() {
            let nv = vec3::dot(n, *v);
            let keep = match side {
                Side::Outgoing => nv > 0.0,
                Side::Incoming => nv < 0.0,
            };
            if keep {
                items.push((w.at(f.time, *v) * f.row(i)[k], nv.abs() * dv * area));
            }
        }
    }
    lp_accumulate(items.into_iter(), p)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub lambda_hat: f64,
    pub amplitude: f64,
    pub rho_used: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `log y = log A - lambda t^rho`.
pub fn decay_fit(series: &[(f64, f64)], rho: f64) -> Result<DecayFit> {
    if series.len() < 5 || series.iter().any(|(t, y)| !(*y > 0.0) || !t.is_finite() || !y.is_finite()) {
        return Err(Error::NonPositiveSeries);
    }
    let xs: Vec<f64> = series.iter().map(|(t, _)| t.max(0.0).powf(rho)).collect();
    let ys: Vec<f64> = series.iter().map(|(_, y)| y.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::NonPositiveSeries);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy <= 1e-300 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    let lambda_hat = if syy <= 1e-300 { 0.0 } else { -slope };
    Ok(DecayFit { lambda_hat, amplitude: intercept.exp(), rho_used: rho, r_squared })
}

/// Admissible `(p, beta)`: `(p-2)/p < beta < (2-varpi)/(3-varpi)`.
pub fn check_p_beta(p: f64, beta: f64, varpi: f64) -> Result<()> {
    let lo = (p - 2.0) / p;
    let hi = (2.0 - varpi) / (3.0 - varpi);
    if p >= 1.0 && lo < beta && beta < hi {
        Ok(())
    } else {
        Err(Error::InvalidPBeta { p, beta })
    }
}

/// Centered (one-sided at the ends) derivative along the spatial grid at
/// node `i` for velocity index `k`.
fn dx(f: &DistributionField, i: usize, k: usize) -> f64 {
    let n = f.grid.space.nodes;
    let h = f.grid.space.spacing();
    let at = |j: usize| f.row(j)[k];
    if i == 0 {
        (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
    } else if i + 1 == n {
        (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h)
    } else {
        (at(i + 1) - at(i - 1)) / (2.0 * h)
    }
}

/// Lattice gradient of a velocity profile (one-sided at the lattice faces).
pub fn velocity_gradient(lat: &VelocityLattice, row: &[f64]) -> Vec<Vec3> {
    let n = lat.n;
    let h = lat.spacing();
    (0..lat.len())
        .map(|k| {
            let c = lat.unflat(k);
            let mut g = [0.0; 3];
            for a in 0..3 {
                let step = |d: isize| -> f64 {
                    let mut cc = c;
                    cc[a] = (c[a] as isize + d) as usize;
                    row[lat.flat(cc[0], cc[1], cc[2])]
                };
                g[a] = if n < 3 {
                    0.0
                } else if c[a] == 0 {
                    (-3.0 * step(0) + 4.0 * step(1) - step(2)) / (2.0 * h)
                } else if c[a] == n - 1 {
                    (3.0 * step(0) - 4.0 * step(-1) + step(-2)) / (2.0 * h)
                } else {
                    (step(1) - step(-1)) / (2.0 * h)
                };
            }
            g
        })
        .collect()
}

/// `|w alpha^beta (d_x f, grad_v f)|_p` with `alpha` from backward traces in
/// the frozen field.
pub fn alpha_weighted_derivative_norm(
    f: &DistributionField,
    field: &PotentialField,
    wp: &WeightParams,
    alpha_eps: f64,
    p: f64,
    beta: f64,
    varpi: f64,
) -> Result<f64> {
    check_p_beta(p, beta, varpi)?;
    let grid = &f.grid;
    let lat = grid.velocity;
    let nodes = lat.nodes();
    let nv = lat.len();
    let dvol = lat.cell_volume();
    let vol = grid.space.volumes();
    let params = KineticWeightParams { epsilon: alpha_eps };
    let opts = TraceOptions { step: 0.01, ..TraceOptions::default() };
    let slab = matches!(grid.space.geometry.kind, crate::domain::DomainKind::Slab { .. });
    let mut total = 0.0;
    for i in 0..grid.space.nodes {
        let x = grid.space.position(i);
        let gv = velocity_gradient(&lat, f.row(i));
        // In the slab alpha depends on (x, v_x) only.
        let mut cache: Vec<Option<f64>> = vec![None; lat.n];
        for k in 0..nv {
            let v = nodes[k];
            let kx = lat.unflat(k)[0];
            let alpha = if slab {
                match cache[kx] {
                    Some(a) => a,
                    None => {
                        let a = kinetic_weight(&grid.space.geometry, f.time, x, [v[0], 0.0, 0.0], field, &params, &opts)?;
                        cache[kx] = Some(a);
                        a
                    }
                }
            } else {
                kinetic_weight(&grid.space.geometry, f.time, x, v, field, &params, &opts)?
            };
            let d = dx(f, i, k);
            let mag = (d * d + vec3::norm2(gv[k])).sqrt();
            let val = weight(f.time, v, wp) * alpha.powf(beta) * mag;
            if p.is_infinite() {
                total = f64::max(total, val);
            } else {
                total += val.powf(p) * dvol * vol[i];
            }
        }
    }
    Ok(if p.is_infinite() { total } else { total.powf(1.0 / p) })
}

/// `|w grad_v f|_{L^3_x L^{1+delta}_v}`.
pub fn l3_l1delta_norm(f: &DistributionField, w: &WeightSpec, delta: f64) -> f64 {
    let grid = &f.grid;
    let lat = grid.velocity;
    let nodes = lat.nodes();
    let dv = lat.cell_volume();
    let q = 1.0 + delta;
    let inner: Vec<f64> = (0..grid.space.nodes)
        .map(|i| {
            let gv = velocity_gradient(&lat, f.row(i));
            let s: f64 = gv.iter().zip(&nodes).map(|(g, v)| (w.at(f.time, *v) * vec3::norm(*g)).powf(q) * dv).sum();
            s.powf(1.0 / q)
        })
        .collect();
    let cubes: Vec<f64> = inner.iter().map(|x| x.powi(3)).collect();
    grid.space.integrate(&cubes).max(0.0).powf(1.0 / 3.0)
}

/// Orthonormal basis of `span{sqrt_mu, v sqrt_mu, |v|^2 sqrt_mu}` in the
/// lattice `L^2_v` inner product (Gram-Schmidt).
pub fn hydrodynamic_basis(lat: &VelocityLattice) -> Vec<Vec<f64>> {
    let nodes = lat.nodes();
    let dv = lat.cell_volume();
    let sm = lat.sample(crate::weights::sqrt_maxwellian);
    let raw: Vec<Vec<f64>> = (0..5)
        .map(|m| {
            nodes
                .iter()
                .zip(&sm)
                .map(|(v, s)| {
                    s * match m {
                        0 => 1.0,
                        1..=3 => v[m - 1],
                        _ => vec3::norm2(*v),
                    }
                })
                .collect()
        })
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * dv;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut e in raw {
        // Two passes for stability.
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&e, b);
                e.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let nrm = dot(&e, &e).sqrt();
        e.iter_mut().for_each(|x| *x /= nrm);
        basis.push(e);
    }
    basis
}

/// `P f`, the projection on the collision invariants.
pub fn hydrodynamic_projection(lat: &VelocityLattice, f: &[f64]) -> Vec<f64> {
    let dv = lat.cell_volume();
    let mut out = vec![0.0; f.len()];
    for b in hydrodynamic_basis(lat) {
        let c: f64 = b.iter().zip(f).map(|(x, y)| x * y).sum::<f64>() * dv;
        out.iter_mut().zip(&b).for_each(|(o, x)| *o += c * x);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoercivityProbe {
    /// `(L f, f)`.
    pub lhs: f64,
    /// `|(I - P) f|_nu^2`.
    pub rhs: f64,
}

impl CoercivityProbe {
    /// `lhs / rhs`, or `None` when `f` lies in the null space.
    pub fn ratio(&self) -> Option<f64> {
        (self.rhs > 0.0).then(|| self.lhs / self.rhs)
    }
}

/// Both quadratic forms of `(L f, f) >= delta_0 |(I - P) f|_nu^2`; the
/// inequality is reported, not assumed.
pub fn coercivity_probe(op: &LatticeCollision, f: &[f64]) -> Result<CoercivityProbe> {
    let lat = op.lattice();
    let dv = lat.cell_volume();
    let lf = op.apply_l(f)?;
    let lhs = lf.iter().zip(f).map(|(a, b)| a * b).sum::<f64>() * dv;
    let pf = hydrodynamic_projection(lat, f);
    let nu = op.nu_lattice();
    let rhs = f.iter().zip(&pf).zip(nu).map(|((a, b), n)| n * (a - b) * (a - b)).sum::<f64>() * dv;
    // Round-off left by the projection of a pure invariant.
    let scale = f.iter().zip(nu).map(|(a, n)| n * a * a).sum::<f64>() * dv;
    let rhs = if rhs <= 1e-24 * scale { 0.0 } else { rhs };
    Ok(CoercivityProbe { lhs, rhs })
}

/// One row of the run history.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub t: f64,
    pub sup_w: f64,
    pub lp_w: f64,
    pub l2: f64,
    pub boundary_plus: f64,
    pub alpha_deriv_lp: f64,
    pub l3_l1delta: f64,
    pub grad_phi_sup: f64,
    pub hess_phi_sup: f64,
    pub mass_residual: f64,
    pub energy_identity_residual: f64,
}

pub const HISTORY_COLUMNS: [&str; 11] = [
    "t",
    "sup_w",
    "lp_w",
    "l2",
    "boundary_plus",
    "alpha_deriv_lp",
    "l3_l1delta",
    "grad_phi_sup",
    "hess_phi_sup",
    "mass_residual",
    "energy_identity_residual",
];

/// Norm settings used for each history row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormSettings {
    pub p: f64,
    pub beta: f64,
    pub varpi: f64,
    pub delta: f64,
    /// Width of the kinetic-weight ramp.
    pub alpha_eps: f64,
    /// Compute the alpha-weighted norm every this many rows (0 disables it).
    pub alpha_every: usize,
}

impl Default for NormSettings {
    fn default() -> Self {
        Self { p: 4.0, beta: 0.6, varpi: 0.0, delta: 0.1, alpha_eps: 0.01, alpha_every: 1 }
    }
}

/// Norms of `f` for one history row (the residual columns are left at 0).
pub fn norm_report(
    f: &DistributionField,
    field: &PotentialField,
    wp: &WeightParams,
    settings: &NormSettings,
    with_alpha: bool,
) -> Result<NormReport> {
    let w = WeightSpec::Dynamic(*wp);
    let alpha = if with_alpha {
        alpha_weighted_derivative_norm(f, field, wp, settings.alpha_eps, settings.p, settings.beta, settings.varpi)?
    } else {
        0.0
    };
    Ok(NormReport {
        t: f.time,
        sup_w: weighted_norm(f, &w, f64::INFINITY),
        lp_w: weighted_norm(f, &w, settings.p),
        l2: weighted_norm(f, &WeightSpec::Unit, 2.0),
        boundary_plus: boundary_norm(f, &w, settings.p, Side::Outgoing),
        alpha_deriv_lp: alpha,
        l3_l1delta: l3_l1delta_norm(f, &w, settings.delta),
        grad_phi_sup: field.grad_sup(),
        hess_phi_sup: field.hess_sup,
        mass_residual: 0.0,
        energy_identity_residual: 0.0,
    })
}

pub fn write_history(path: &Path, rows: &[NormReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a run history, rejecting missing columns, short rows and non-numeric cells.
pub fn read_history(path: &Path) -> Result<Vec<NormReport>> {
    let mut r = csv::ReaderBuilder::new().flexible(false).from_path(path).map_err(|e| Error::MalformedHistory(e.to_string()))?;
    let headers = r.headers().map_err(|e| Error::MalformedHistory(e.to_string()))?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != HISTORY_COLUMNS {
        return Err(Error::MalformedHistory(format!("unexpected columns {got:?}")));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.deserialize::<NormReport>().enumerate() {
        rows.push(rec.map_err(|e| Error::MalformedHistory(format!("row {}: {e}", line + 1)))?);
    }
    if rows.is_empty() {
        return Err(Error::MalformedHistory("no rows".into()));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainGeometry;
    use crate::field::SpatialGrid;
    use crate::solver::PhaseGrid;
    use rand::{Rng, SeedableRng};

    fn grid(nx: usize, n: usize) -> PhaseGrid {
        PhaseGrid {
            space: SpatialGrid::new(DomainGeometry::slab(1.0), nx).unwrap(),
            velocity: VelocityLattice::new(n, 6.0).unwrap(),
        }
    }

    #[test]
    fn norms_of_simple_fields() {
        let g = grid(9, 12);
        let zero = DistributionField::zeros(&g, 0.0);
        for p in [1.0, 2.0, 4.0, f64::INFINITY] {
            assert_eq!(weighted_norm(&zero, &WeightSpec::Unit, p), 0.0);
            assert_eq!(boundary_norm(&zero, &WeightSpec::Unit, p, Side::Outgoing), 0.0);
        }
        let one = DistributionField::from_fn(&g, 0.0, |_, _| 1.0);
        assert_eq!(weighted_norm(&one, &WeightSpec::Unit, f64::INFINITY), 1.0);

        let g = grid(9, 24);
        let c = 0.01;
        let sm = DistributionField::from_fn(&g, 0.0, |_, v| crate::weights::sqrt_maxwellian(v));
        let got = weighted_norm(&sm, &WeightSpec::Static(c), 2.0);
        // int exp(2c|v|^2 - |v|^2/2) dv = (2 pi / (1 - 4c))^{3/2}, |Omega| = 1.
        let exact = (2.0 * std::f64::consts::PI / (1.0 - 4.0 * c)).powf(0.75);
        assert!((got - exact).abs() < 1e-6 * exact, "{got} vs {exact}");
    }

    #[test]
    fn boundary_norm_matches_lattice_sum_and_side() {
        let g = grid(5, 12);
        let lat = g.velocity;
        let one = DistributionField::from_fn(&g, 0.0, |_, _| 1.0);
        let got = boundary_norm(&one, &WeightSpec::Unit, 1.0, Side::Outgoing);
        let half: f64 = lat.nodes().iter().filter(|v| v[0] > 0.0).map(|v| v[0] * lat.cell_volume()).sum();
        assert!((got - 2.0 * half).abs() < 1e-12 * got);
        // Closed form of the half-space first moment on the truncated lattice.
        let vmax = lat.vmax;
        assert!((half - 0.5 * vmax * vmax * (2.0 * vmax).powi(2)).abs() < 1e-9 * half);

        let incoming_only = DistributionField::from_fn(&g, 0.0, |x, v| {
            let left = x[0] < 0.5;
            if (left && v[0] > 0.0) || (!left && v[0] < 0.0) { 1.0 } else { 0.0 }
        });
        assert_eq!(boundary_norm(&incoming_only, &WeightSpec::Unit, 2.0, Side::Outgoing), 0.0);
        assert!(boundary_norm(&incoming_only, &WeightSpec::Unit, 2.0, Side::Incoming) > 0.0);
    }

    fn random_field(seed: u64) -> DistributionField {
        let g = grid(7, 6);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut f = DistributionField::zeros(&g, 0.3);
        f.values.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        f
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn norms_are_homogeneous(seed in 0u64..1000, c in -10.0f64..10.0) {
            let f = random_field(seed);
            let mut cf = f.clone();
            cf.values.iter_mut().for_each(|x| *x *= c);
            let w = WeightSpec::Dynamic(WeightParams::default());
            for p in [1.0, 2.0, 4.0, f64::INFINITY] {
                let a = weighted_norm(&f, &w, p);
                let b = weighted_norm(&cf, &w, p);
                proptest::prop_assert!((b - c.abs() * a).abs() <= 1e-12 * a.max(b));
            }
            let a = l3_l1delta_norm(&f, &w, 0.1);
            proptest::prop_assert!((l3_l1delta_norm(&cf, &w, 0.1) - c.abs() * a).abs() <= 1e-12 * a.max(1e-300));
        }

        #[test]
        fn norms_satisfy_the_triangle_inequality(s1 in 0u64..1000, s2 in 0u64..1000) {
            let (f, g) = (random_field(s1), random_field(s2));
            let mut sum = f.clone();
            sum.values.iter_mut().zip(&g.values).for_each(|(x, y)| *x += y);
            let w = WeightSpec::Dynamic(WeightParams::default());
            for p in [1.0, 1.1, 2.0, f64::INFINITY] {
                let lhs = weighted_norm(&sum, &w, p);
                proptest::prop_assert!(lhs <= (weighted_norm(&f, &w, p) + weighted_norm(&g, &w, p)) * (1.0 + 1e-12));
            }
        }

        #[test]
        fn decay_fit_recovers_exact_series(lambda in 0.0f64..3.0, amp in 1e-6f64..1e2, rho in 0.05f64..0.95) {
            let s: Vec<(f64, f64)> = (0..30).map(|k| {
                let t = 0.4 * k as f64;
                (t, amp * (-lambda * t.powf(rho)).exp())
            }).collect();
            let fit = decay_fit(&s, rho).unwrap();
            proptest::prop_assert!((fit.lambda_hat - lambda).abs() < 1e-8);
            proptest::prop_assert!((fit.amplitude / amp - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn decay_fit_examples() {
        let exact: Vec<(f64, f64)> = (0..40).map(|k| {
            let t = 0.25 * k as f64;
            (t, 2.0 * (-0.5 * t.powf(1.0 / 3.0)).exp())
        }).collect();
        let fit = decay_fit(&exact, 1.0 / 3.0).unwrap();
        assert!((fit.amplitude - 2.0).abs() < 1e-10);
        assert!((fit.lambda_hat - 0.5).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-10);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let noisy: Vec<(f64, f64)> = exact.iter().map(|(t, y)| (*t, y * (1.0 + 0.01 * rng.gen_range(-1.0..1.0)))).collect();
        let fit = decay_fit(&noisy, 1.0 / 3.0).unwrap();
        assert!((fit.lambda_hat - 0.5).abs() < 0.05);

        let flat: Vec<(f64, f64)> = (0..6).map(|k| (k as f64, 3.0)).collect();
        assert_eq!(decay_fit(&flat, 1.0 / 3.0).unwrap().lambda_hat, 0.0);
        assert!(matches!(decay_fit(&flat[..4], 1.0 / 3.0), Err(Error::NonPositiveSeries)));
        let mut bad = flat.clone();
        bad[2].1 = 0.0;
        assert!(matches!(decay_fit(&bad, 1.0 / 3.0), Err(Error::NonPositiveSeries)));
    }

    #[test]
    fn p_beta_admissibility() {
        assert!(check_p_beta(4.0, 0.6, 0.0).is_ok());
        assert!(matches!(check_p_beta(4.0, 0.3, 0.0), Err(Error::InvalidPBeta { .. })));
        assert!(check_p_beta(4.0, 0.5, 0.0).is_err());
        assert!(check_p_beta(4.0, 0.7, 0.0).is_err());
    }

    #[test]
    fn alpha_norm_of_constant_and_linear_fields() {
        let g = grid(9, 8);
        let field = PotentialField::zero(&g.space);
        let wp = WeightParams::default();
        let c = DistributionField::from_fn(&g, 0.5, |_, _| 3.0);
        assert!(alpha_weighted_derivative_norm(&c, &field, &wp, 0.01, 4.0, 0.6, 0.0).unwrap() < 1e-10);
        let a1 = alpha_weighted_derivative_norm(&DistributionField::from_fn(&g, 0.5, |x, _| 0.7 * x[0]), &field, &wp, 0.01, 4.0, 0.6, 0.0).unwrap();
        let a2 = alpha_weighted_derivative_norm(&DistributionField::from_fn(&g, 0.5, |x, _| -1.4 * x[0]), &field, &wp, 0.01, 4.0, 0.6, 0.0).unwrap();
        assert!(a1.is_finite() && a1 > 0.0);
        assert!((a2 - 2.0 * a1).abs() < 1e-10 * a2);
        assert!(matches!(alpha_weighted_derivative_norm(&c, &field, &wp, 0.01, 4.0, 0.3, 0.0), Err(Error::InvalidPBeta { .. })));
    }

    #[test]
    fn history_roundtrip_and_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let rows = vec![NormReport { t: 0.0, sup_w: 1.0, ..Default::default() }, NormReport { t: 0.1, sup_w: 0.5, ..Default::default() }];
        write_history(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), HISTORY_COLUMNS.join(","));
        assert_eq!(read_history(&path).unwrap(), rows);
        let cut = &text[..text.len() - 10];
        std::fs::write(&path, cut).unwrap();
        assert!(matches!(read_history(&path), Err(Error::MalformedHistory(_))));
    }
}
