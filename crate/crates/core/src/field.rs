//! Electrostatic potential with zero Neumann data, charge and current
//! densities, and the discrete field-energy and continuity residuals.
//!
//! Both geometries use a one-dimensional node grid: the slab `[0, L]` along
//! the first coordinate, or the radius `[0, R]` of the ball for radially
//! symmetric sources. The Laplacian is discretized by finite volumes, which
//! for the slab is the usual three-point stencil with a mirrored ghost node.

use serde::{Deserialize, Serialize};

use crate::domain::{DomainGeometry, DomainKind};
use crate::error::{Error, Result};
use crate::kinematics::ForceField;
use crate::lattice::VelocityLattice;
use crate::vec3::Vec3;

const RESIDUAL_TOL: f64 = 1e-10;

/// Node grid of the spatial domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub geometry: DomainGeometry,
    pub nodes: usize,
}

impl SpatialGrid {
    pub fn new(geometry: DomainGeometry, nodes: usize) -> Result<Self> {
        if nodes < 3 {
            return Err(Error::InvalidParams(format!("spatial grid needs at least 3 nodes, got {nodes}")));
        }
        Ok(Self { geometry, nodes })
    }

    pub fn extent(&self) -> f64 {
        match self.geometry.kind {
            DomainKind::Slab { length } => length,
            DomainKind::Ball { radius } => radius,
        }
    }

    pub fn spacing(&self) -> f64 {
        self.extent() / (self.nodes - 1) as f64
    }

    /// Coordinate of node `i` (position along the slab, or radius).
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    pub fn position(&self, i: usize) -> Vec3 {
        [self.coord(i), 0.0, 0.0]
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        match self.geometry.kind {
            DomainKind::Slab { .. } => i == 0 || i + 1 == self.nodes,
            DomainKind::Ball { .. } => i + 1 == self.nodes,
        }
    }

    /// Control-volume measure of each node (per unit cross-section for the
    /// slab, full shell volume for the ball).
    pub fn volumes(&self) -> Vec<f64> {
        let h = self.spacing();
        let last = self.nodes - 1;
        match self.geometry.kind {
            DomainKind::Slab { .. } => (0..self.nodes).map(|i| if i == 0 || i == last { 0.5 * h } else { h }).collect(),
            DomainKind::Ball { .. } => (0..self.nodes)
                .map(|i| {
                    let lo = (i as f64 - 0.5).max(0.0) * h;
                    let hi = (i as f64 + 0.5).min(last as f64) * h;
                    4.0 / 3.0 * std::f64::consts::PI * (hi.powi(3) - lo.powi(3))
                })
                .collect(),
        }
    }

    /// Face measure between nodes `i` and `i + 1`.
    fn face(&self, i: usize) -> f64 {
        match self.geometry.kind {
            DomainKind::Slab { .. } => 1.0,
            DomainKind::Ball { .. } => {
                let r = (i as f64 + 0.5) * self.spacing();
                4.0 * std::f64::consts::PI * r * r
            }
        }
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(self.volumes()).map(|(v, w)| v * w).sum()
    }

    /// Linear interpolation of nodal values at coordinate `s`, clamped to the grid.
    pub fn interpolate(&self, values: &[f64], s: f64) -> f64 {
        let u = (s / self.spacing()).clamp(0.0, (self.nodes - 1) as f64);
        let i = (u.floor() as usize).min(self.nodes - 2);
        let a = u - i as f64;
        (1.0 - a) * values[i] + a * values[i + 1]
    }
}

/// `rho(x) = int sqrt_mu f dv` at every spatial node; `values` is row-major
/// `[node][velocity]`.
pub fn charge_density(lattice: &VelocityLattice, values: &[f64]) -> Result<Vec<f64>> {
    let len = lattice.len();
    if values.len() % len != 0 {
        return Err(Error::LatticeMismatch { expected: len, got: values.len() % len });
    }
    let sm = lattice.sample(crate::weights::sqrt_maxwellian);
    let dv = lattice.cell_volume();
    Ok(values.chunks(len).map(|row| dv * row.iter().zip(&sm).map(|(f, s)| f * s).sum::<f64>()).collect())
}

/// `j(x) = int v sqrt_mu f dv` at every spatial node.
pub fn current_density(lattice: &VelocityLattice, values: &[f64]) -> Result<Vec<Vec3>> {
    let len = lattice.len();
    if values.len() % len != 0 {
        return Err(Error::LatticeMismatch { expected: len, got: values.len() % len });
    }
    let nodes = lattice.nodes();
    let sm = lattice.sample(crate::weights::sqrt_maxwellian);
    let dv = lattice.cell_volume();
    Ok(values
        .chunks(len)
        .map(|row| {
            let mut j = [0.0; 3];
            for ((f, s), v) in row.iter().zip(&sm).zip(&nodes) {
                for k in 0..3 {
                    j[k] += dv * f * s * v[k];
                }
            }
            j
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialField {
    pub phi: Vec<f64>,
    /// Gradient along the grid direction (slab axis or radial direction).
    pub grad_phi: Vec<Vec3>,
    /// `max |phi''|` from the discrete operator.
    pub hess_sup: f64,
    /// Mean removed from the source to satisfy the Neumann solvability condition.
    pub projection: f64,
    pub mean_pinned: bool,
    pub grid: SpatialGrid,
}

impl PotentialField {
    pub fn zero(grid: &SpatialGrid) -> Self {
        Self {
            phi: vec![0.0; grid.nodes],
            grad_phi: vec![[0.0; 3]; grid.nodes],
            hess_sup: 0.0,
            projection: 0.0,
            mean_pinned: true,
            grid: grid.clone(),
        }
    }

    pub fn grad_sup(&self) -> f64 {
        self.grad_phi.iter().map(|g| crate::vec3::norm(*g)).fold(0.0, f64::max)
    }

    /// `int |grad phi|^2 dx` with the grid volumes.
    pub fn energy(&self) -> f64 {
        let sq: Vec<f64> = self.grad_phi.iter().map(|g| crate::vec3::norm2(*g)).collect();
        self.grid.integrate(&sq)
    }

    /// Gradient at an arbitrary point, linear between nodes.
    pub fn grad_at(&self, x: Vec3) -> Vec3 {
        let along = |s: f64| -> f64 {
            let g = &self.grid;
            let u = (s / g.spacing()).clamp(0.0, (g.nodes - 1) as f64);
            let i = (u.floor() as usize).min(g.nodes - 2);
            let a = u - i as f64;
            (1.0 - a) * self.grad_phi[i][0] + a * self.grad_phi[i + 1][0]
        };
        match self.grid.geometry.kind {
            DomainKind::Slab { .. } => [along(x[0]), 0.0, 0.0],
            DomainKind::Ball { .. } => {
                let r = crate::vec3::norm(x);
                if r == 0.0 {
                    return [0.0; 3];
                }
                crate::vec3::scale(x, along(r) / r)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.grad_phi.iter().all(|g| g.iter().all(|c| *c == 0.0))
    }
}

/// The electric acceleration `-grad phi`, frozen in time.
impl ForceField for PotentialField {
    fn force(&self, _s: f64, x: Vec3) -> Vec3 {
        crate::vec3::scale(self.grad_at(x), -1.0)
    }

    fn is_zero(&self) -> bool {
        PotentialField::is_zero(self)
    }
}

/// Solves `-Lap phi = source` with zero Neumann data. The source is first
/// projected to zero mean, and `phi` is pinned to zero mean.
pub fn solve_poisson(source: &[f64], grid: &SpatialGrid) -> Result<PotentialField> {
    let n = grid.nodes;
    if source.len() != n {
        return Err(Error::LatticeMismatch { expected: n, got: source.len() });
    }
    let vol = grid.volumes();
    let total: f64 = vol.iter().sum();
    let projection = source.iter().zip(&vol).map(|(s, w)| s * w).sum::<f64>() / total;
    let s: Vec<f64> = source.iter().map(|x| x - projection).collect();
    if s.iter().all(|x| *x == 0.0) {
        let mut field = PotentialField::zero(grid);
        field.projection = projection;
        return Ok(field);
    }

    // Finite-volume rows: a_i (phi_i - phi_{i-1}) + a_{i+1} (phi_i - phi_{i+1}) = V_i s_i.
    let h = grid.spacing();
    let coef: Vec<f64> = (0..n - 1).map(|i| grid.face(i) / h).collect();
    let apply = |phi: &[f64], i: usize| -> f64 {
        let mut r = 0.0;
        if i > 0 {
            r += coef[i - 1] * (phi[i] - phi[i - 1]);
        }
        if i + 1 < n {
            r += coef[i] * (phi[i] - phi[i + 1]);
        }
        r
    };

    // Pin phi_0 = 0 and drop row 0 (implied by solvability); Thomas sweep on rows 1..n.
    let m = n - 1;
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut lower = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    for r in 0..m {
        let i = r + 1;
        diag[r] = coef[i - 1] + if i + 1 < n { coef[i] } else { 0.0 };
        if r > 0 {
            lower[r] = -coef[i - 1];
        }
        if i + 1 < n {
            upper[r] = -coef[i];
        }
        rhs[r] = vol[i] * s[i];
    }
    for r in 1..m {
        let w = lower[r] / diag[r - 1];
        diag[r] -= w * upper[r - 1];
        rhs[r] -= w * rhs[r - 1];
    }
    let mut sol = vec![0.0; m];
    sol[m - 1] = rhs[m - 1] / diag[m - 1];
    for r in (0..m - 1).rev() {
        sol[r] = (rhs[r] - upper[r] * sol[r + 1]) / diag[r];
    }
    let mut phi = vec![0.0; n];
    phi[1..].copy_from_slice(&sol);
    let mean = phi.iter().zip(&vol).map(|(p, w)| p * w).sum::<f64>() / total;
    phi.iter_mut().for_each(|p| *p -= mean);

    let scale = source.iter().zip(&vol).map(|(x, w)| (x * w).abs()).fold(0.0, f64::max);
    let residual = (0..n).map(|i| (apply(&phi, i) - vol[i] * s[i]).abs()).fold(0.0, f64::max) / scale;
    if !(residual <= RESIDUAL_TOL) {
        return Err(Error::SolverDivergence(residual));
    }

    // Centered differences; the mirrored ghost node makes the end values zero.
    let mut grad_phi = vec![[0.0; 3]; n];
    for i in 1..n - 1 {
        grad_phi[i][0] = (phi[i + 1] - phi[i - 1]) / (2.0 * h);
    }
    let hess_sup = (0..n).map(|i| (apply(&phi, i) / vol[i]).abs()).fold(0.0, f64::max);
    Ok(PotentialField { phi, grad_phi, hess_sup, projection, mean_pinned: true, grid: grid.clone() })
}

/// Residual of `d/dt int |grad phi|^2 + 2 int E . j = 0` between two
/// consecutive states, with `E = -grad phi` and the current averaged over
/// both ends.
pub fn field_energy_step_residual(before: (&PotentialField, &[Vec3]), after: (&PotentialField, &[Vec3]), dt: f64) -> f64 {
    let (f0, j0) = before;
    let (f1, j1) = after;
    let work = |f: &PotentialField, j: &[Vec3]| -> f64 {
        let p: Vec<f64> = f.grad_phi.iter().zip(j).map(|(g, c)| -crate::vec3::dot(*g, *c)).collect();
        f.grid.integrate(&p)
    };
    (f1.energy() - f0.energy()) / dt + (work(f0, j0) + work(f1, j1))
}

/// Residual series of the field-energy identity over a run.
pub fn field_energy_residual(states: &[(f64, PotentialField, Vec<Vec3>)]) -> Vec<f64> {
    states
        .windows(2)
        .map(|w| field_energy_step_residual((&w[0].1, &w[0].2), (&w[1].1, &w[1].2), w[1].0 - w[0].0))
        .collect()
}

/// `max_x |d_t rho + div j|` between two states (slab: centered difference
/// of the averaged current; one-sided at the ends).
pub fn continuity_residual(grid: &SpatialGrid, rho: (&[f64], &[f64]), j: (&[Vec3], &[Vec3]), dt: f64) -> f64 {
    let n = grid.nodes;
    let h = grid.spacing();
    let jm: Vec<f64> = (0..n).map(|i| 0.5 * (j.0[i][0] + j.1[i][0])).collect();
    let radial = matches!(grid.geometry.kind, DomainKind::Ball { .. });
    let flux = |i: usize| -> f64 {
        if radial {
            let r = grid.coord(i);
            r * r * jm[i]
        } else {
            jm[i]
        }
    };
    (0..n)
        .map(|i| {
            let d = if i == 0 {
                (flux(1) - flux(0)) / h
            } else if i + 1 == n {
                (flux(n - 1) - flux(n - 2)) / h
            } else {
                (flux(i + 1) - flux(i - 1)) / (2.0 * h)
            };
            let div = if radial {
                let r = grid.coord(i);
                if r == 0.0 { 3.0 * (jm[1] - jm[0]) / h } else { d / (r * r) }
            } else {
                d
            };
            ((rho.1[i] - rho.0[i]) / dt + div).abs()
        })
        .fold(0.0, f64::max)
}
