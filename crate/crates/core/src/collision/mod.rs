//! Soft-potential Boltzmann collision operator with angular cutoff
//! `b0(cos) = |cos|`, split by a smooth cutoff `chi` on the relative speed.

mod frequency;
mod kernel;
mod lattice_op;
mod table;

pub use frequency::{collision_frequency, frequency_envelope};
pub use kernel::{
    eval_k2, eval_k2_chi, eval_k2_plane_quadrature, fit_envelope, gamma_bound_ratio, k2_bound, k2_row_integral,
    k_one_minus_chi_certificate, k_one_minus_chi_direct, one_minus_chi_radial_mass, EnvelopeFit,
};
pub use lattice_op::{LatticeCollision, QParts};
pub use table::KernelTable;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::chi_tilde;
use crate::lattice::VelocityLattice;
use crate::vec3::{self, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionParams {
    pub gamma: f64,
    /// Width of the relative-speed cutoff: `chi = 0` below `epsilon`, 1 above `2 epsilon`.
    pub epsilon: f64,
    /// Number of Lebedev nodes on the sphere.
    pub sphere_order: usize,
    pub lattice: VelocityLattice,
}

impl CollisionParams {
    pub fn new(gamma: f64, epsilon: f64, sphere_order: usize, lattice: VelocityLattice) -> Result<Self> {
        let p = Self { gamma, epsilon, sphere_order, lattice };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > -3.0 && self.gamma < 0.0) {
            return Err(Error::InvalidParams(format!("gamma = {} must lie in (-3, 0)", self.gamma)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParams(format!("chi epsilon = {} must be positive", self.epsilon)));
        }
        crate::sphere::SphereRule::lebedev(self.sphere_order)?;
        VelocityLattice::new(self.lattice.n, self.lattice.vmax)?;
        Ok(())
    }
}

/// Relative-speed cutoff: 0 for `s <= eps`, 1 for `s >= 2 eps`.
pub fn chi(s: f64, eps: f64) -> f64 {
    chi_tilde((s - eps) / eps)
}

/// Post-collision velocities `u' = u - ((u-v).w) w`, `v' = v + ((u-v).w) w`.
pub fn post_collision(u: Vec3, v: Vec3, omega: Vec3) -> (Vec3, Vec3) {
    let c = vec3::dot(vec3::sub(u, v), omega);
    (vec3::axpy(u, -c, omega), vec3::axpy(v, c, omega))
}

/// Angular kernel `|cos theta|`, with `cos theta` between `u - v` and `omega`.
pub fn angular_kernel(rel: Vec3, omega: Vec3) -> f64 {
    let r = vec3::norm(rel);
    if r == 0.0 {
        0.0
    } else {
        (vec3::dot(rel, omega) / r).abs()
    }
}
