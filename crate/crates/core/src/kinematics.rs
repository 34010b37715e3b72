//! Backward characteristics `dx/ds = v`, `dv/ds = E(s, x)`, the backward
//! exit time `t_b`, and the kinetic weight `alpha`.
//!
//! Integration is classical RK4 with a fixed step; the boundary crossing is
//! refined by bisection on the signed distance.

use crate::domain::{DomainGeometry, GRAZING_TOL};
use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

/// A force field `E(s, x)` acting on the velocity.
pub trait ForceField: Sync {
    fn force(&self, s: f64, x: Vec3) -> Vec3;

    /// Fields known to vanish identically skip integration entirely.
    fn is_zero(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroField;

impl ForceField for ZeroField {
    fn force(&self, _s: f64, _x: Vec3) -> Vec3 {
        [0.0; 3]
    }

    fn is_zero(&self) -> bool {
        true
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConstantField(pub Vec3);

impl ForceField for ConstantField {
    fn force(&self, _s: f64, _x: Vec3) -> Vec3 {
        self.0
    }
}

/// Adapter for closures.
pub struct FnField<F>(pub F);

impl<F: Fn(f64, Vec3) -> Vec3 + Sync> ForceField for FnField<F> {
    fn force(&self, s: f64, x: Vec3) -> Vec3 {
        (self.0)(s, x)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TraceOptions {
    /// RK4 step in `s`.
    pub step: f64,
    /// Bisection tolerance on the signed distance at the exit point.
    pub crossing_tol: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { step: 0.01 / 8.0, crossing_tol: 1e-10 }
    }
}

impl TraceOptions {
    pub fn for_time_step(dt: f64) -> Self {
        Self { step: dt / 8.0, ..Self::default() }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub t: f64,
    pub x: Vec3,
    pub v: Vec3,
    /// Backward exit time; equals the horizon when the trajectory never left.
    pub t_b: f64,
    pub x_b: Vec3,
    pub v_b: Vec3,
    pub exited: bool,
    /// `(s, x(s), v(s))` in decreasing `s`, starting at the terminal point.
    pub samples: Vec<(f64, Vec3, Vec3)>,
}

#[inline]
fn rk4_step<F: ForceField + ?Sized>(field: &F, s: f64, x: Vec3, v: Vec3, h: f64) -> (Vec3, Vec3) {
    // h may be negative (backward in s).
    let k1x = v;
    let k1v = field.force(s, x);
    let x2 = vec3::axpy(x, 0.5 * h, k1x);
    let v2 = vec3::axpy(v, 0.5 * h, k1v);
    let k2x = v2;
    let k2v = field.force(s + 0.5 * h, x2);
    let x3 = vec3::axpy(x, 0.5 * h, k2x);
    let v3 = vec3::axpy(v, 0.5 * h, k2v);
    let k3x = v3;
    let k3v = field.force(s + 0.5 * h, x3);
    let x4 = vec3::axpy(x, h, k3x);
    let v4 = vec3::axpy(v, h, k3v);
    let k4x = v4;
    let k4v = field.force(s + h, x4);
    let mut xn = x;
    let mut vn = v;
    for i in 0..3 {
        xn[i] += h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
        vn[i] += h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
    }
    (xn, vn)
}

fn finite(x: Vec3, v: Vec3) -> bool {
    x.iter().chain(v.iter()).all(|c| c.is_finite())
}

/// Flow map `(x(s), v(s))` of the characteristic through `(t, x, v)`,
/// ignoring the boundary.
pub fn flow_to<F: ForceField + ?Sized>(field: &F, t: f64, x: Vec3, v: Vec3, s: f64, opts: &TraceOptions) -> (Vec3, Vec3) {
    if field.is_zero() {
        return (vec3::axpy(x, s - t, v), v);
    }
    let span = s - t;
    let n = (span.abs() / opts.step).ceil().max(1.0) as usize;
    let h = span / n as f64;
    let (mut xc, mut vc) = (x, v);
    for k in 0..n {
        let (xn, vn) = rk4_step(field, t + k as f64 * h, xc, vc, h);
        xc = xn;
        vc = vn;
    }
    (xc, vc)
}

/// Traces the characteristic through `(t, x, v)` backward in time until it
/// first leaves the domain or `horizon` has elapsed.
pub fn trace_backward<F: ForceField + ?Sized>(
    geometry: &DomainGeometry,
    t: f64,
    x: Vec3,
    v: Vec3,
    field: &F,
    horizon: f64,
    opts: &TraceOptions,
) -> Result<Trajectory> {
    let mut samples = vec![(t, x, v)];
    let sd0 = geometry.signed_distance(x);
    let tol = geometry.boundary_tol().max(opts.crossing_tol);
    if sd0 > tol {
        return Err(Error::InvalidParams(format!("trace start lies outside the domain (distance {sd0:e})")));
    }
    // A point on gamma_- leaves immediately when followed backward.
    if sd0 >= -tol {
        let n = geometry.normal_unchecked(x);
        if vec3::dot(n, v) < 0.0 {
            return Ok(Trajectory { t, x, v, t_b: 0.0, x_b: x, v_b: v, exited: true, samples });
        }
    }

    let n_steps = (horizon / opts.step).ceil().max(1.0) as usize;
    let h = horizon / n_steps as f64;
    let (mut s, mut xc, mut vc) = (t, x, v);
    for _ in 0..n_steps {
        let (xn, vn) = rk4_step(field, s, xc, vc, -h);
        if !finite(xn, vn) {
            return Err(Error::IntegratorFailure(format!("non-finite state at s = {s}")));
        }
        if geometry.signed_distance(xn) > 0.0 {
            // Bisect on the length of the last sub-step, then polish with
            // Newton using d(sd)/d(step) = -n . v.
            let (mut lo, mut hi) = (0.0, h);
            let mut best = (f64::INFINITY, h, xn, vn);
            let mut keep = |step: f64, xs: Vec3, vs: Vec3| {
                let d = geometry.signed_distance(xs);
                if d.abs() < best.0 {
                    best = (d.abs(), step, xs, vs);
                }
                d
            };
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let (xm, vm) = rk4_step(field, s, xc, vc, -mid);
                let d = keep(mid, xm, vm);
                if d > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if d.abs() <= opts.crossing_tol || hi - lo < 1e-15 * horizon.max(1.0) {
                    break;
                }
            }
            let mut step = 0.5 * (lo + hi);
            for _ in 0..3 {
                let (xs, vs) = rk4_step(field, s, xc, vc, -step);
                let d = keep(step, xs, vs);
                let slope = vec3::dot(geometry.normal_unchecked(xs), vs);
                if slope.abs() < GRAZING_TOL || d == 0.0 {
                    break;
                }
                let next = step + d / slope;
                if !(0.0..=h).contains(&next) {
                    break;
                }
                step = next;
            }
            let (_, step, xb, vb) = best;
            let s_exit = s - step;
            samples.push((s_exit, xb, vb));
            return Ok(Trajectory { t, x, v, t_b: t - s_exit, x_b: xb, v_b: vb, exited: true, samples });
        }
        s -= h;
        xc = xn;
        vc = vn;
        samples.push((s, xc, vc));
    }
    Ok(Trajectory { t, x, v, t_b: horizon, x_b: xc, v_b: vc, exited: false, samples })
}

/// Smooth monotone ramp: 0 for `tau <= 0`, 1 for `tau >= 1`, slope at most 2.
pub fn chi_tilde(tau: f64) -> f64 {
    fn psi(s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else {
            (-1.0 / s).exp()
        }
    }
    if tau <= 0.0 {
        0.0
    } else if tau >= 1.0 {
        1.0
    } else {
        let a = psi(tau);
        a / (a + psi(1.0 - tau))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct KineticWeightParams {
    pub epsilon: f64,
}

/// Kinetic weight from an already traced trajectory.
pub fn kinetic_weight_of(geometry: &DomainGeometry, traj: &Trajectory, epsilon: f64) -> f64 {
    if !traj.exited {
        return 1.0;
    }
    let ramp = chi_tilde((traj.t - traj.t_b + epsilon) / epsilon);
    let n = geometry.normal_unchecked(traj.x_b);
    ramp * vec3::dot(n, traj.v_b).abs() + (1.0 - ramp)
}

/// `alpha_{f,eps}(t, x, v)`; the trace horizon reaches back to `s = -eps`.
pub fn kinetic_weight<F: ForceField + ?Sized>(
    geometry: &DomainGeometry,
    t: f64,
    x: Vec3,
    v: Vec3,
    field: &F,
    params: &KineticWeightParams,
    opts: &TraceOptions,
) -> Result<f64> {
    let traj = trace_backward(geometry, t, x, v, field, t + params.epsilon, opts)?;
    Ok(kinetic_weight_of(geometry, &traj, params.epsilon))
}

/// Exit map `(x, v) -> (t - t_b, x_b, v_b)` in local boundary coordinates.
fn exit_coordinates<F: ForceField + ?Sized>(
    geometry: &DomainGeometry,
    t: f64,
    x: Vec3,
    v: Vec3,
    field: &F,
    frame: (Vec3, Vec3),
    horizon: f64,
    opts: &TraceOptions,
) -> Result<[f64; 6]> {
    let traj = trace_backward(geometry, t, x, v, field, horizon, opts)?;
    if !traj.exited {
        return Err(Error::InvalidParams("trajectory does not reach the boundary within the horizon".into()));
    }
    let (t1, t2) = frame;
    Ok([t - traj.t_b, vec3::dot(traj.x_b, t1), vec3::dot(traj.x_b, t2), traj.v_b[0], traj.v_b[1], traj.v_b[2]])
}

#[derive(Clone, Copy, Debug)]
pub struct JacobianReport {
    pub determinant: f64,
    pub expected: f64,
    pub residual: f64,
}

/// Compares the finite-difference Jacobian of the exit map with
/// `1 / |n(x_b) . v_b|`.
pub fn jacobian_check<F: ForceField + ?Sized>(
    geometry: &DomainGeometry,
    t: f64,
    x: Vec3,
    v: Vec3,
    field: &F,
    fd_step: f64,
    opts: &TraceOptions,
) -> Result<JacobianReport> {
    let horizon = 10.0 * geometry.diameter() / vec3::norm(v).max(1e-3) + t;
    let base = trace_backward(geometry, t, x, v, field, horizon, opts)?;
    if !base.exited {
        return Err(Error::InvalidParams("trajectory does not reach the boundary within the horizon".into()));
    }
    let n_b = geometry.normal_unchecked(base.x_b);
    let nv = vec3::dot(n_b, base.v_b).abs();
    if nv < 1e3 * GRAZING_TOL.max(fd_step) {
        return Err(Error::GrazingDegenerate(nv));
    }
    let frame = vec3::tangent_frame(n_b);
    let scale = 1.0f64.max(vec3::norm(x)).max(vec3::norm(v));
    let h = fd_step * scale;
    let mut jac = nalgebra::Matrix6::<f64>::zeros();
    for k in 0..6 {
        let (mut xp, mut vp, mut xm, mut vm) = (x, v, x, v);
        if k < 3 {
            xp[k] += h;
            xm[k] -= h;
        } else {
            vp[k - 3] += h;
            vm[k - 3] -= h;
        }
        let plus = exit_coordinates(geometry, t, xp, vp, field, frame, horizon, opts)?;
        let minus = exit_coordinates(geometry, t, xm, vm, field, frame, horizon, opts)?;
        for r in 0..6 {
            jac[(r, k)] = (plus[r] - minus[r]) / (2.0 * h);
        }
    }
    let determinant = jac.determinant().abs();
    let expected = 1.0 / nv;
    Ok(JacobianReport { determinant, expected, residual: determinant - expected })
}

#[derive(Clone, Copy, Debug)]
pub struct DerivativeBound {
    /// Frobenius norm of `grad_v x(s; t, x, v)`.
    pub norm: f64,
    /// `norm / |t - s|`, the constant in the linear-in-time bound.
    pub ratio: f64,
}

pub fn trajectory_derivative_bound<F: ForceField + ?Sized>(
    t: f64,
    x: Vec3,
    v: Vec3,
    field: &F,
    s: f64,
    fd_step: f64,
    opts: &TraceOptions,
) -> DerivativeBound {
    let h = fd_step * 1.0f64.max(vec3::norm(v));
    let mut sq = 0.0;
    for k in 0..3 {
        let (mut vp, mut vm) = (v, v);
        vp[k] += h;
        vm[k] -= h;
        let (xp, _) = flow_to(field, t, x, vp, s, opts);
        let (xm, _) = flow_to(field, t, x, vm, s, opts);
        for r in 0..3 {
            let d = (xp[r] - xm[r]) / (2.0 * h);
            sq += d * d;
        }
    }
    let norm = sq.sqrt();
    let gap = (t - s).abs();
    DerivativeBound { norm, ratio: if gap > 0.0 { norm / gap } else { 0.0 } }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slab() -> DomainGeometry {
        DomainGeometry::slab(1.0)
    }

    #[test]
    fn free_streaming_exit_left() {
        let tr = trace_backward(&slab(), 1.0, [0.5, 0.0, 0.0], [1.0, 0.0, 0.0], &ZeroField, 2.0, &TraceOptions::default()).unwrap();
        assert!(tr.exited);
        assert!((tr.t_b - 0.5).abs() < 1e-9);
        assert!(tr.x_b[0].abs() < 1e-9);
        assert_eq!(tr.v_b, [1.0, 0.0, 0.0]);
        let n = slab().normal(tr.x_b).unwrap();
        assert_eq!(vec3::dot(n, tr.v_b), -1.0);
    }

    #[test]
    fn free_streaming_exit_right() {
        let tr = trace_backward(&slab(), 1.0, [0.3, 0.0, 0.0], [-1.0, 0.0, 0.0], &ZeroField, 2.0, &TraceOptions::default()).unwrap();
        assert!((tr.t_b - 0.7).abs() < 1e-9);
        assert!((tr.x_b[0] - 1.0).abs() < 1e-9);
        assert_eq!(tr.v_b, [-1.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_field_crossing_matches_quadratic_root() {
        // x(s) = x - tau v + a tau^2 / 2 with tau = t - s.
        for &(x0, vx, a) in &[(0.5, 1.0, 0.8), (0.2, -0.7, -1.5), (0.9, 0.3, 2.0)] {
            let tr = trace_backward(&slab(), 1.0, [x0, 0.0, 0.0], [vx, 0.0, 0.0], &ConstantField([a, 0.0, 0.0]), 5.0, &TraceOptions::default()).unwrap();
            let roots = |target: f64| -> Option<f64> {
                // a/2 tau^2 - vx tau + (x0 - target) = 0, smallest positive root
                let (qa, qb, qc) = (0.5 * a, -vx, x0 - target);
                let disc = qb * qb - 4.0 * qa * qc;
                if disc < 0.0 {
                    return None;
                }
                [(-qb - disc.sqrt()) / (2.0 * qa), (-qb + disc.sqrt()) / (2.0 * qa)]
                    .into_iter()
                    .filter(|r| *r > 0.0)
                    .min_by(|p, q| p.total_cmp(q))
            };
            let expected = [roots(0.0), roots(1.0)].into_iter().flatten().min_by(|p, q| p.total_cmp(q)).unwrap();
            assert!((tr.t_b - expected).abs() < 1e-8, "{} vs {}", tr.t_b, expected);
        }
    }

    #[test]
    fn interior_trace_without_exit() {
        let tr = trace_backward(&slab(), 1.0, [0.5, 0.0, 0.0], [0.01, 0.0, 0.0], &ZeroField, 1.0, &TraceOptions::default()).unwrap();
        assert!(!tr.exited);
        assert_eq!(tr.t_b, 1.0);
        assert_eq!(tr.samples.first().unwrap().1, [0.5, 0.0, 0.0]);
    }

    #[test]
    fn chi_tilde_ramp() {
        assert_eq!(chi_tilde(-1.0), 0.0);
        assert_eq!(chi_tilde(2.0), 1.0);
        let h = 1e-5;
        let mut max_slope: f64 = 0.0;
        let mut prev = chi_tilde(-0.1);
        let mut tau = -0.1;
        while tau < 1.1 {
            let next = chi_tilde(tau + h);
            let slope = (next - prev) / h;
            assert!(slope >= -1e-12);
            max_slope = max_slope.max(slope);
            prev = next;
            tau += h;
        }
        assert!(max_slope <= 4.0, "{max_slope}");
    }

    #[test]
    fn kinetic_weight_examples() {
        let p = KineticWeightParams { epsilon: 0.01 };
        let o = TraceOptions::default();
        // On gamma_-: alpha = |n.v|.
        let a = kinetic_weight(&slab(), 1.0, [0.0, 0.0, 0.0], [0.5, 0.0, 0.0], &ZeroField, &p, &o).unwrap();
        assert!((a - 0.5).abs() < 1e-12);
        // Never exited within the horizon.
        let a = kinetic_weight(&slab(), 1.0, [0.5, 0.0, 0.0], [0.1, 0.0, 0.0], &ZeroField, &p, &o).unwrap();
        assert_eq!(a, 1.0);
        // Free streaming, t - t_b = 0.5.
        let a = kinetic_weight(&slab(), 1.0, [0.5, 0.0, 0.0], [1.0, 0.0, 0.0], &ZeroField, &p, &o).unwrap();
        assert!((a - 1.0).abs() < 1e-12);
        let a = kinetic_weight(&slab(), 1.0, [0.5, 0.0, 0.0], [0.8, 0.3, 0.0], &ZeroField, &p, &o).unwrap();
        assert!((a - 0.8).abs() < 1e-9);
    }

    #[test]
    fn slab_jacobian_is_inverse_normal_velocity() {
        let o = TraceOptions::default();
        for &(x0, v) in &[(0.3, [0.7, 0.2, -0.4]), (0.8, [-1.3, 0.5, 0.1]), (0.5, [2.0, 0.0, 0.0])] {
            let r = jacobian_check(&slab(), 1.0, [x0, 0.1, -0.2], v, &ZeroField, 1e-5, &o).unwrap();
            assert!((r.expected - 1.0 / v[0].abs()).abs() < 1e-9);
            assert!(r.residual.abs() / r.expected < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn grazing_jacobian_is_rejected() {
        let o = TraceOptions::default();
        let err = jacobian_check(&slab(), 1.0, [0.0, 0.0, 0.0], [1e-12, 1.0, 0.0], &ZeroField, 1e-5, &o);
        assert!(matches!(err, Err(Error::GrazingDegenerate(_))));
    }

    #[test]
    fn derivative_bound_free_streaming() {
        let o = TraceOptions::default();
        let b = trajectory_derivative_bound(1.0, [0.5, 0.0, 0.0], [0.3, 0.1, 0.0], &ZeroField, 0.5, 1e-5, &o);
        assert!((b.norm - 0.5 * 3f64.sqrt()).abs() < 1e-8);
        let b = trajectory_derivative_bound(1.0, [0.5, 0.0, 0.0], [0.3, 0.1, 0.0], &ZeroField, 1.0, 1e-5, &o);
        assert!(b.norm.abs() < 1e-12);
    }

    #[test]
    fn derivative_bound_small_constant_field_close_to_free_streaming() {
        let o = TraceOptions::default();
        let b = trajectory_derivative_bound(1.0, [0.5, 0.0, 0.0], [0.3, 0.1, 0.0], &ConstantField([0.05, 0.0, 0.0]), 0.5, 1e-5, &o);
        // Constant force: x(s) is affine in v, so the derivative is exactly -(t-s) Id.
        assert!((b.norm / (0.5 * 3f64.sqrt()) - 1.0).abs() < 0.1);
    }

    #[test]
    fn ball_jacobian_is_inverse_normal_velocity() {
        use rand::{Rng, SeedableRng};
        let ball = DomainGeometry::ball(1.0);
        let o = TraceOptions::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 20 {
            let x: Vec3 = [rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6)];
            let v: Vec3 = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            if !ball.contains(x) || vec3::norm(v) < 0.2 {
                continue;
            }
            match jacobian_check(&ball, 1.0, x, v, &ZeroField, 1e-5, &o) {
                Ok(r) => {
                    assert!(r.residual.abs() / r.expected < 1e-3, "{r:?}");
                    checked += 1;
                }
                Err(Error::GrazingDegenerate(_)) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn kinetic_weight_is_constant_along_characteristics() {
        let field = ConstantField([0.3, 0.0, 0.0]);
        let p = KineticWeightParams { epsilon: 0.05 };
        let o = TraceOptions::default();
        let (t, x, v) = (0.8, [0.6, 0.0, 0.0], [0.9, 0.2, 0.0]);
        let base = kinetic_weight(&slab(), t, x, v, &field, &p, &o).unwrap();
        for &ds in &[0.05, 0.1, 0.2] {
            let (xs, vs) = flow_to(&field, t, x, v, t - ds, &o);
            let a = kinetic_weight(&slab(), t - ds, xs, vs, &field, &p, &o).unwrap();
            assert!((a - base).abs() < 1e-8, "{a} vs {base}");
        }
    }

    #[test]
    fn exit_time_is_additive() {
        let field = ConstantField([-0.4, 0.1, 0.0]);
        let o = TraceOptions::default();
        let (t, x, v) = (2.0, [0.7, 0.0, 0.0], [0.6, -0.3, 0.2]);
        let full = trace_backward(&slab(), t, x, v, &field, 5.0, &o).unwrap();
        let ds = 0.3;
        let (xs, vs) = flow_to(&field, t, x, v, t - ds, &o);
        let part = trace_backward(&slab(), t - ds, xs, vs, &field, 5.0, &o).unwrap();
        assert!((full.t_b - (ds + part.t_b)).abs() < 1e-8);
        assert!(vec3::norm(vec3::sub(full.x_b, part.x_b)) < 1e-8);
    }
}
