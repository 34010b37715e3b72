use std::sync::Arc;

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BoundaryDatum, DistributionField, PhaseGrid, Representation, SolverConfig};
use crate::collision::{KernelTable, LatticeCollision};
use crate::domain::DomainKind;
use crate::error::{Error, Result};
use crate::field::PotentialField;
use crate::kinematics::{trace_backward, TraceOptions};
use crate::vec3::{self, Vec3};
use crate::weights::{nu_tilde_integral_free, theta_tilde, weight, WeightParams};

/// Spatial interpolation at characteristic feet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Linear,
    Cubic,
}

/// Where the backward characteristic of `(x_i, v_x)` lands after one step.
#[derive(Clone, Debug)]
pub(crate) enum Foot {
    /// Inside the domain at the start of the step: `(node, vx index, weight)`.
    Interior { stencil: Vec<(usize, usize, f64)>, vx: f64 },
    /// Left the domain `t_b` before the end of the step.
    Exit { t_b: f64, x_b: Vec3, vx_b: f64 },
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub field: DistributionField,
    /// Feet whose velocity fell outside the lattice and was clamped.
    pub hull_exits: usize,
}

/// Explicit exponential integrator for the weighted perturbation
/// `h = w f`: along each backward characteristic over one step,
/// `h(t+dt) = e^{-int nu_tilde} h(foot) + phi_1 w S`, with the source
/// `S = K f + Gamma(f, f) - v . grad_phi sqrt_mu` frozen at the start of the step.
#[derive(Clone)]
pub struct Stepper {
    pub grid: PhaseGrid,
    pub config: SolverConfig,
    pub weights: WeightParams,
    op: Arc<LatticeCollision>,
    table: Arc<KernelTable>,
    collisions: bool,
    gamma_cache: Option<Vec<f64>>,
    steps_taken: usize,
    nodes: Vec<Vec3>,
    sqrt_mu: Vec<f64>,
}

impl Stepper {
    pub fn new(grid: PhaseGrid, config: SolverConfig, weights: WeightParams, op: Arc<LatticeCollision>, table: Arc<KernelTable>) -> Result<Self> {
        config.validate()?;
        weights.validate()?;
        if !matches!(grid.space.geometry.kind, DomainKind::Slab { .. }) {
            return Err(Error::Unsupported("time stepping is implemented for the slab only".into()));
        }
        if *op.lattice() != grid.velocity || *table.lattice() != grid.velocity {
            return Err(Error::LatticeMismatch { expected: grid.velocity.len(), got: table.lattice().len() });
        }
        let nodes = grid.velocity.nodes();
        let sqrt_mu = op.sqrt_maxwellian().to_vec();
        Ok(Self { grid, config, weights, op, table, collisions: true, gamma_cache: None, steps_taken: 0, nodes, sqrt_mu })
    }

    /// Disables `K` and `Gamma` (pure transport with damping by `nu_tilde`).
    pub fn without_collisions(mut self) -> Self {
        self.collisions = false;
        self
    }

    /// Forgets the cached quadratic term, as at the start of a new run.
    pub fn reset(&mut self) {
        self.gamma_cache = None;
        self.steps_taken = 0;
    }

    pub fn operator(&self) -> &LatticeCollision {
        &self.op
    }

    pub fn table(&self) -> &KernelTable {
        &self.table
    }

    pub fn collisions_enabled(&self) -> bool {
        self.collisions
    }

    /// Backward feet for every `(node, vx index)`, ending at `t1` after `dt`.
    pub(crate) fn feet(&self, field: &PotentialField, t1: f64, dt: f64, interpolation: Interpolation) -> Result<(Vec<Foot>, usize)> {
        let space = &self.grid.space;
        let lat = self.grid.velocity;
        let n = lat.n;
        let opts = TraceOptions { step: dt / 4.0, ..TraceOptions::default() };
        let out: Vec<Result<(Foot, bool)>> = (0..space.nodes * n)
            .into_par_iter()
            .map(|p| {
                let (i, kx) = (p / n, p % n);
                let vx = lat.coord(kx);
                let traj = trace_backward(&space.geometry, t1, space.position(i), [vx, 0.0, 0.0], field, dt, &opts)?;
                if traj.exited {
                    return Ok((Foot::Exit { t_b: traj.t_b, x_b: traj.x_b, vx_b: traj.v_b[0] }, false));
                }
                let xs = x_stencil(space.nodes, space.spacing(), traj.x_b[0], interpolation);
                let (vs, clamped) = if traj.v_b[0] == vx { (vec![(kx, 1.0)], false) } else { vx_stencil(&lat, traj.v_b[0]) };
                let mut stencil = Vec::with_capacity(xs.len() * vs.len());
                for &(node, a) in &xs {
                    for &(k, b) in &vs {
                        stencil.push((node, k, a * b));
                    }
                }
                Ok((Foot::Interior { stencil, vx: traj.v_b[0] }, clamped))
            })
            .collect();
        let mut feet = Vec::with_capacity(out.len());
        let mut clamped = 0;
        for r in out {
            let (foot, c) = r?;
            clamped += c as usize;
            feet.push(foot);
        }
        Ok((feet, clamped))
    }

    /// `S = K f + Gamma(f, f) - v . grad_phi sqrt_mu`, row-major like `f`.
    pub fn source(&mut self, f: &DistributionField, field: &PotentialField) -> Result<Vec<f64>> {
        let nx = self.grid.space.nodes;
        let nv = self.grid.velocity.len();
        let mut s = vec![0.0; nx * nv];
        if self.collisions && f.values.iter().any(|x| *x != 0.0) {
            let view = ArrayView2::from_shape((nx, nv), &f.values).map_err(|e| Error::InvalidParams(e.to_string()))?;
            let kf = self.table.apply_columns(view.t())?;
            for i in 0..nx {
                for k in 0..nv {
                    s[i * nv + k] = kf[(k, i)];
                }
            }
            if self.gamma_cache.is_none() || self.steps_taken % self.config.nonlinear_every == 0 {
                self.gamma_cache = Some(self.quadratic_term(f)?);
            }
            if let Some(g) = &self.gamma_cache {
                s.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        } else if self.collisions {
            self.gamma_cache = None;
        }
        if !field.is_zero() {
            for i in 0..nx {
                let g = field.grad_phi[i];
                for k in 0..nv {
                    s[i * nv + k] -= vec3::dot(self.nodes[k], g) * self.sqrt_mu[k];
                }
            }
        }
        Ok(s)
    }

    /// `Gamma(f, f)` on every `gain_stride`-th node (and the last), linear in between.
    fn quadratic_term(&self, f: &DistributionField) -> Result<Vec<f64>> {
        let nx = self.grid.space.nodes;
        let nv = self.grid.velocity.len();
        let mut picks: Vec<usize> = (0..nx).step_by(self.config.gain_stride).collect();
        if *picks.last().expect("nonempty") != nx - 1 {
            picks.push(nx - 1);
        }
        let rows: Vec<Result<Vec<f64>>> = picks
            .par_iter()
            .map(|&i| {
                let r = f.row(i);
                if r.iter().all(|x| *x == 0.0) {
                    Ok(vec![0.0; nv])
                } else {
                    self.op.apply_gamma(r, r)
                }
            })
            .collect();
        let rows: Vec<Vec<f64>> = rows.into_iter().collect::<Result<_>>()?;
        let mut out = vec![0.0; nx * nv];
        for w in 0..picks.len() - 1 {
            let (a, b) = (picks[w], picks[w + 1]);
            for i in a..=b {
                let s = (i - a) as f64 / (b - a) as f64;
                for k in 0..nv {
                    out[i * nv + k] = (1.0 - s) * rows[w][k] + s * rows[w + 1][k];
                }
            }
        }
        Ok(out)
    }

    /// Advances a perturbation by one step of size `config.dt`.
    pub fn duhamel_step(&mut self, f: &DistributionField, field: &PotentialField, boundary: &BoundaryDatum) -> Result<StepOutcome> {
        if f.representation != Representation::Perturbation {
            return Err(Error::InvalidParams("duhamel_step expects a perturbation".into()));
        }
        if f.grid != self.grid {
            return Err(Error::LatticeMismatch { expected: self.grid.len(), got: f.grid.len() });
        }
        let dt = self.config.dt;
        let (t0, t1) = (f.time, f.time + dt);
        let source = self.source(f, field)?;
        let (feet, hull_exits) = self.feet(field, t1, dt, self.config.interpolation)?;
        let lat = self.grid.velocity;
        let n = lat.n;
        let nv = lat.len();
        let nu = self.table.nu.clone();
        let wp = self.weights;
        let nodes = &self.nodes;
        let tmid = t0 + 0.5 * dt;
        let tt_mid = theta_tilde(tmid, &wp);
        let mut values = vec![0.0; f.values.len()];
        values.par_chunks_mut(nv).enumerate().for_each(|(i, row)| {
            let g = field.grad_phi[i];
            for k in 0..nv {
                let [kx, ky, kz] = lat.unflat(k);
                let v = nodes[k];
                let drift = vec3::dot(v, g) * (0.5 + 2.0 * tt_mid);
                let (tau, start) = match &feet[i * n + kx] {
                    Foot::Interior { stencil, vx } => {
                        let mut acc = 0.0;
                        for &(node, kx2, w) in stencil {
                            acc += w * f.values[node * nv + lat.flat(kx2, ky, kz)];
                        }
                        (dt, weight(t0, [*vx, v[1], v[2]], &wp) * acc)
                    }
                    Foot::Exit { t_b, x_b, vx_b } => {
                        let vb = [*vx_b, v[1], v[2]];
                        let s = t1 - t_b;
                        (*t_b, weight(s, vb, &wp) * boundary.value(s, *x_b, vb))
                    }
                };
                let integral = nu_tilde_integral_free(t1 - tau, t1, v, &wp, nu[k] + drift);
                let phi1 = if integral.abs() < 1e-12 { tau } else { tau * (-(-integral).exp_m1()) / integral };
                let w1 = weight(t1, v, &wp);
                let h1 = (-integral).exp() * start + phi1 * w1 * source[i * nv + k];
                row[k] = h1 / w1;
            }
        });
        self.steps_taken += 1;
        Ok(StepOutcome {
            field: DistributionField { grid: self.grid.clone(), values, time: t1, representation: Representation::Perturbation },
            hull_exits,
        })
    }

    /// Overwrites the incoming half of every boundary node with `g(t)`.
    pub fn apply_incoming(&self, f: &mut DistributionField, boundary: &BoundaryDatum) {
        let nv = self.grid.velocity.len();
        for i in super::boundary::boundary_nodes(&self.grid) {
            let x = self.grid.space.position(i);
            let nrm = self.grid.space.geometry.normal_unchecked(x);
            for k in 0..nv {
                let v = self.nodes[k];
                if vec3::dot(nrm, v) < 0.0 {
                    let val = if f.representation == Representation::Absolute {
                        let mu = self.sqrt_mu[k] * self.sqrt_mu[k];
                        mu + self.sqrt_mu[k] * boundary.value(f.time, x, v)
                    } else {
                        boundary.value(f.time, x, v)
                    };
                    f.values[i * nv + k] = val;
                }
            }
        }
    }
}

/// Nodes and weights for interpolating at coordinate `s` on a uniform grid.
pub(crate) fn x_stencil(nodes: usize, h: f64, s: f64, interpolation: Interpolation) -> Vec<(usize, f64)> {
    let u = (s / h).clamp(0.0, (nodes - 1) as f64);
    let i = (u.floor() as usize).min(nodes - 2);
    let a = u - i as f64;
    if a == 0.0 {
        return vec![(i, 1.0)];
    }
    match interpolation {
        Interpolation::Cubic if nodes >= 4 => {
            let start = i.saturating_sub(1).min(nodes - 4);
            let z = u - start as f64;
            (0..4)
                .map(|m| {
                    let mut w = 1.0;
                    for q in 0..4 {
                        if q != m {
                            w *= (z - q as f64) / (m as f64 - q as f64);
                        }
                    }
                    (start + m, w)
                })
                .collect()
        }
        _ => vec![(i, 1.0 - a), (i + 1, a)],
    }
}

/// Linear interpolation along the lattice `v_x` axis; clamps outside the hull.
fn vx_stencil(lat: &crate::lattice::VelocityLattice, vx: f64) -> (Vec<(usize, f64)>, bool) {
    let u = (vx + lat.vmax) / lat.spacing() - 0.5;
    let top = (lat.n - 1) as f64;
    if u < 0.0 || u > top {
        let k = if u < 0.0 { 0 } else { lat.n - 1 };
        return (vec![(k, 1.0)], true);
    }
    let i = (u.floor() as usize).min(lat.n - 2);
    let a = u - i as f64;
    (vec![(i, 1.0 - a), (i + 1, a)], false)
}
