use std::fmt;
use std::sync::Arc;

use super::{DistributionField, PhaseGrid};
use crate::domain::DomainKind;
use crate::vec3::{self, Vec3};
use crate::weights::{maxwellian, sqrt_maxwellian, weight, WeightParams};

type ProfileFn = dyn Fn(f64, Vec3, Vec3) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum BoundaryProfile {
    Zero,
    /// `g = c(t, x) sqrt_mu(v)`, with `c` chosen after every step so that the
    /// incoming mass flux matches the outgoing one at each boundary node.
    FluxBalanced,
    /// `g(t, x, v)` for the perturbation.
    Function(Arc<ProfileFn>),
}

impl fmt::Debug for BoundaryProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::FluxBalanced => write!(f, "FluxBalanced"),
            Self::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// In-flow datum `g` on the incoming set.
#[derive(Clone, Debug)]
pub struct BoundaryDatum {
    pub profile: BoundaryProfile,
    /// Claimed decay rate `lambda_0` of `e^{lambda_0 s^rho} |w g(s)|_inf`.
    pub decay_rate: f64,
    pub amplitude: f64,
    /// Coefficients of the flux-balanced profile as `(first coordinate of the
    /// boundary node, c)`.
    balance: Vec<(f64, f64)>,
}

impl BoundaryDatum {
    pub fn zero() -> Self {
        Self { profile: BoundaryProfile::Zero, decay_rate: 0.0, amplitude: 0.0, balance: Vec::new() }
    }

    pub fn flux_balanced() -> Self {
        Self { profile: BoundaryProfile::FluxBalanced, decay_rate: 0.0, amplitude: 1.0, balance: Vec::new() }
    }

    pub fn function(amplitude: f64, decay_rate: f64, g: impl Fn(f64, Vec3, Vec3) -> f64 + Send + Sync + 'static) -> Self {
        Self { profile: BoundaryProfile::Function(Arc::new(g)), decay_rate, amplitude, balance: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        match self.profile {
            BoundaryProfile::Zero => true,
            BoundaryProfile::FluxBalanced => self.balance.iter().all(|(_, c)| *c == 0.0),
            BoundaryProfile::Function(_) => self.amplitude == 0.0,
        }
    }

    /// Perturbation value `g(t, x, v)` at a boundary point.
    pub fn value(&self, t: f64, x: Vec3, v: Vec3) -> f64 {
        match &self.profile {
            BoundaryProfile::Zero => 0.0,
            BoundaryProfile::Function(g) => self.amplitude * g(t, x, v),
            BoundaryProfile::FluxBalanced => {
                let c = self
                    .balance
                    .iter()
                    .min_by(|a, b| (a.0 - x[0]).abs().total_cmp(&(b.0 - x[0]).abs()))
                    .map(|p| p.1)
                    .unwrap_or(0.0);
                c * sqrt_maxwellian(v)
            }
        }
    }

    /// Recomputes the flux-balanced coefficients from the outgoing part of `f`.
    pub fn update_balance(&mut self, f: &DistributionField) {
        if !matches!(self.profile, BoundaryProfile::FluxBalanced) {
            return;
        }
        let grid = &f.grid;
        let nodes = grid.velocity.nodes();
        let sm = grid.velocity.sample(sqrt_maxwellian);
        let mut balance = Vec::new();
        for i in boundary_nodes(grid) {
            let n = grid.space.geometry.normal_unchecked(grid.space.position(i));
            let (mut out, mut unit) = (0.0, 0.0);
            for (k, v) in nodes.iter().enumerate() {
                let nv = vec3::dot(n, *v);
                if nv > 0.0 {
                    out += sm[k] * f.row(i)[k] * nv;
                } else {
                    unit -= maxwellian(*v) * nv;
                }
            }
            balance.push((grid.space.coord(i), out / unit));
        }
        self.balance = balance;
    }

    /// `sup_s e^{lambda_0 s^rho} |w g(s)|_inf` over the incoming lattice
    /// points of every boundary node at the sampled times.
    pub fn weighted_sup(&self, grid: &PhaseGrid, times: &[f64], wp: &WeightParams) -> f64 {
        let nodes = grid.velocity.nodes();
        let rho = wp.rho();
        let mut sup: f64 = 0.0;
        for &t in times {
            for i in boundary_nodes(grid) {
                let x = grid.space.position(i);
                let n = grid.space.geometry.normal_unchecked(x);
                for v in nodes.iter().filter(|v| vec3::dot(n, **v) < 0.0) {
                    let g = (self.decay_rate * t.max(0.0).powf(rho)).exp() * weight(t, *v, wp) * self.value(t, x, *v);
                    sup = sup.max(g.abs());
                }
            }
        }
        sup
    }
}

pub(crate) fn boundary_nodes(grid: &PhaseGrid) -> Vec<usize> {
    let last = grid.space.nodes - 1;
    match grid.space.geometry.kind {
        DomainKind::Slab { .. } => vec![0, last],
        DomainKind::Ball { .. } => vec![last],
    }
}

/// Per boundary node: outgoing flux `int_{n.v>0} sqrt_mu f |n.v|` minus the
/// incoming flux `int_{n.v<0} sqrt_mu g |n.v|` of the datum at time `t`.
pub fn boundary_flux_compatibility(f: &DistributionField, boundary: &BoundaryDatum, t: f64) -> Vec<f64> {
    let grid = &f.grid;
    let nodes = grid.velocity.nodes();
    let sm = grid.velocity.sample(sqrt_maxwellian);
    let dv = grid.velocity.cell_volume();
    boundary_nodes(grid)
        .into_iter()
        .map(|i| {
            let x = grid.space.position(i);
            let n = grid.space.geometry.normal_unchecked(x);
            let mut acc = 0.0;
            for (k, v) in nodes.iter().enumerate() {
                let nv = vec3::dot(n, *v);
                if nv > 0.0 {
                    acc += sm[k] * f.row(i)[k] * nv;
                } else {
                    acc -= sm[k] * boundary.value(t, x, *v) * (-nv);
                }
            }
            acc * dv
        })
        .collect()
}
