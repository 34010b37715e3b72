//! Bounded convex spatial domains and the incoming/outgoing split of the
//! phase boundary.
//!
//! Two analytic geometries are supported. The slab `[0, L]` (in the first
//! coordinate, unbounded in the other two) is convex but flat, so its
//! convexity constant is zero. The ball of radius `R` is strictly convex with
//! constant `1/R`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

/// Tolerance below which `|n . v|` counts as grazing.
pub const GRAZING_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainKind {
    Slab { length: f64 },
    Ball { radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainGeometry {
    pub kind: DomainKind,
    pub convexity_constant: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryClass {
    Incoming,
    Outgoing,
    Grazing,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub x: Vec3,
    pub v: Vec3,
    pub class: BoundaryClass,
}

impl DomainGeometry {
    pub fn slab(length: f64) -> Self {
        assert!(length > 0.0, "slab length must be positive");
        Self { kind: DomainKind::Slab { length }, convexity_constant: 0.0 }
    }

    pub fn ball(radius: f64) -> Self {
        assert!(radius > 0.0, "ball radius must be positive");
        Self { kind: DomainKind::Ball { radius }, convexity_constant: 1.0 / radius }
    }

    pub fn diameter(&self) -> f64 {
        match self.kind {
            DomainKind::Slab { length } => length,
            DomainKind::Ball { radius } => 2.0 * radius,
        }
    }

    /// Boundary membership tolerance.
    pub fn boundary_tol(&self) -> f64 {
        1e-12 * self.diameter()
    }

    pub fn signed_distance(&self, x: Vec3) -> f64 {
        match self.kind {
            DomainKind::Slab { length } => (-x[0]).max(x[0] - length),
            DomainKind::Ball { radius } => vec3::norm(x) - radius,
        }
    }

    pub fn contains(&self, x: Vec3) -> bool {
        self.signed_distance(x) < 0.0
    }

    /// Outward unit normal at a boundary point.
    pub fn normal(&self, x: Vec3) -> Result<Vec3> {
        // Exit points from bisection sit within 1e-10 of the boundary.
        let d = self.signed_distance(x);
        if d.abs() > self.boundary_tol().max(1e-9 * self.diameter()) {
            return Err(Error::NotOnBoundary { distance: d });
        }
        Ok(self.normal_unchecked(x))
    }

    /// Outward normal of the nearest boundary piece, without membership check.
    pub fn normal_unchecked(&self, x: Vec3) -> Vec3 {
        match self.kind {
            DomainKind::Slab { length } => {
                if x[0] < 0.5 * length {
                    [-1.0, 0.0, 0.0]
                } else {
                    [1.0, 0.0, 0.0]
                }
            }
            DomainKind::Ball { .. } => {
                let r = vec3::norm(x);
                if r == 0.0 {
                    [1.0, 0.0, 0.0]
                } else {
                    vec3::scale(x, 1.0 / r)
                }
            }
        }
    }

    pub fn classify_boundary(&self, x: Vec3, v: Vec3) -> Result<BoundaryClass> {
        self.classify_boundary_with_tol(x, v, GRAZING_TOL)
    }

    pub fn classify_boundary_with_tol(&self, x: Vec3, v: Vec3, grazing_tol: f64) -> Result<BoundaryClass> {
        let n = self.normal(x)?;
        Ok(classify_sign(vec3::dot(n, v), grazing_tol))
    }

    pub fn boundary_point(&self, x: Vec3, v: Vec3) -> Result<BoundaryPoint> {
        Ok(BoundaryPoint { x, v, class: self.classify_boundary(x, v)? })
    }

    /// Second fundamental form `sum_ij zeta_i zeta_j d_i d_j eta(0) . n` of a
    /// local chart through the boundary point `x`, by central differences.
    ///
    /// For the ball the chart is the radial projection of the tangent plane;
    /// the slab faces are planes and the form vanishes identically.
    pub fn second_fundamental_form(&self, x: Vec3, zeta: [f64; 2], step: f64) -> Result<f64> {
        let n = self.normal(x)?;
        match self.kind {
            DomainKind::Slab { .. } => Ok(0.0),
            DomainKind::Ball { radius } => {
                let (t1, t2) = vec3::tangent_frame(n);
                let q = vec3::add(vec3::scale(t1, zeta[0]), vec3::scale(t2, zeta[1]));
                let chart = |s: f64| {
                    let p = vec3::axpy(x, s, q);
                    vec3::dot(vec3::scale(p, radius / vec3::norm(p)), n)
                };
                Ok((chart(step) - 2.0 * chart(0.0) + chart(-step)) / (step * step))
            }
        }
    }
}

pub fn classify_sign(n_dot_v: f64, grazing_tol: f64) -> BoundaryClass {
    if n_dot_v.abs() < grazing_tol {
        BoundaryClass::Grazing
    } else if n_dot_v < 0.0 {
        BoundaryClass::Incoming
    } else {
        BoundaryClass::Outgoing
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_distance_examples() {
        assert_eq!(DomainGeometry::slab(1.0).signed_distance([0.5, 0.0, 0.0]), -0.5);
        let ball = DomainGeometry::ball(1.0);
        assert_eq!(ball.signed_distance([0.0; 3]), -1.0);
        assert_eq!(ball.signed_distance([1.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn normals() {
        let slab = DomainGeometry::slab(1.0);
        assert_eq!(slab.normal([0.0, 0.3, 0.0]).unwrap(), [-1.0, 0.0, 0.0]);
        assert_eq!(slab.normal([1.0, 0.0, 2.0]).unwrap(), [1.0, 0.0, 0.0]);
        let ball = DomainGeometry::ball(2.0);
        assert_eq!(ball.normal([0.0, 2.0, 0.0]).unwrap(), [0.0, 1.0, 0.0]);
        assert!(matches!(slab.normal([0.5, 0.0, 0.0]), Err(Error::NotOnBoundary { .. })));
    }

    #[test]
    fn classification() {
        let slab = DomainGeometry::slab(1.0);
        let c = |x: f64, v: Vec3| slab.classify_boundary([x, 0.0, 0.0], v).unwrap();
        assert_eq!(c(0.0, [1.0, 0.0, 0.0]), BoundaryClass::Incoming);
        assert_eq!(c(1.0, [1.0, 0.0, 0.0]), BoundaryClass::Outgoing);
        assert_eq!(c(0.0, [0.0, 1.0, 0.0]), BoundaryClass::Grazing);
        assert!(slab.classify_boundary([0.4, 0.0, 0.0], [1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn convexity_constants() {
        assert_eq!(DomainGeometry::slab(3.0).convexity_constant, 0.0);
        assert_eq!(DomainGeometry::ball(4.0).convexity_constant, 0.25);
    }

    #[test]
    fn ball_second_fundamental_form_matches_curvature() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for &radius in &[0.5, 1.0, 3.0] {
            let ball = DomainGeometry::ball(radius);
            for _ in 0..50 {
                let dir: Vec3 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let x = vec3::scale(dir, radius / vec3::norm(dir));
                let zeta = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let form = ball.second_fundamental_form(x, zeta, 1e-4 * radius).unwrap();
                let expected = -ball.convexity_constant * (zeta[0] * zeta[0] + zeta[1] * zeta[1]);
                assert!((form - expected).abs() < 1e-6, "{form} vs {expected}");
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn classification_is_a_partition(nv in -2.0f64..2.0) {
            let class = classify_sign(nv, GRAZING_TOL);
            let hits = [nv <= -GRAZING_TOL, nv >= GRAZING_TOL, nv.abs() < GRAZING_TOL]
                .iter().filter(|b| **b).count();
            proptest::prop_assert_eq!(hits, 1);
            match class {
                BoundaryClass::Incoming => proptest::prop_assert!(nv < 0.0),
                BoundaryClass::Outgoing => proptest::prop_assert!(nv > 0.0),
                BoundaryClass::Grazing => proptest::prop_assert!(nv.abs() < GRAZING_TOL),
            }
        }
    }
}
