use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::step::{Foot, Interpolation, Stepper};
use super::{BoundaryDatum, DistributionField, Representation};
use crate::collision::LatticeCollision;
use crate::error::{Error, Result};
use crate::field::PotentialField;
use crate::weights::weight;

#[derive(Clone, Debug)]
pub struct PicardOutcome {
    pub field: DistributionField,
    pub iterations: usize,
    /// `|w (f^{l+1} - f^l)|_inf` for every iteration.
    pub increments: Vec<f64>,
    pub converged: bool,
}

/// One time step of the absolute form by the iteration
/// `d_t F^{l+1} + v . grad_x F^{l+1} - grad phi . grad_v F^{l+1} = Q_gain(F^l, F^l) - nu(F^l) F^{l+1}`.
///
/// Each iterate is the exact exponential solution along characteristics with
/// the gain frozen at the end point, built from nonnegative pieces only (linear
/// interpolation, nonnegative gain and boundary data), so `F^{l+1} >= 0`
/// whenever `F^l >= 0` and the data are.
pub fn picard_solve(stepper: &Stepper, prev: &DistributionField, field: &PotentialField, boundary: &BoundaryDatum) -> Result<PicardOutcome> {
    if prev.representation != Representation::Absolute {
        return Err(Error::InvalidParams("picard_solve expects an absolute distribution".into()));
    }
    prev.check_nonnegative()?;
    let grid = &stepper.grid;
    let cfg = &stepper.config;
    let wp = stepper.weights;
    let op = stepper.operator();
    let dt = cfg.dt;
    let t1 = prev.time + dt;
    let (feet, _) = stepper.feet(field, t1, dt, Interpolation::Linear)?;
    let lat = grid.velocity;
    let n = lat.n;
    let nv = lat.len();
    let nodes = lat.nodes();
    let sm = op.sqrt_maxwellian().to_vec();
    let collide = stepper.collisions_enabled();

    // Transported start values and the time spent inside the domain.
    let mut start = vec![0.0; prev.values.len()];
    let mut tau = vec![0.0; prev.values.len()];
    for i in 0..grid.space.nodes {
        for k in 0..nv {
            let [kx, ky, kz] = lat.unflat(k);
            let v = nodes[k];
            let idx = i * nv + k;
            match &feet[i * n + kx] {
                Foot::Interior { stencil, .. } => {
                    start[idx] = stencil.iter().map(|&(node, kx2, w)| w * prev.values[node * nv + lat.flat(kx2, ky, kz)]).sum();
                    tau[idx] = dt;
                }
                Foot::Exit { t_b, x_b, vx_b } => {
                    let vb = [*vx_b, v[1], v[2]];
                    let s = t1 - t_b;
                    let mub = crate::weights::maxwellian(vb);
                    start[idx] = mub + mub.sqrt() * boundary.value(s, *x_b, vb);
                    tau[idx] = *t_b;
                }
            }
        }
    }

    let mut current = prev.values.clone();
    let mut increments = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.picard_max_iter {
        let rows: Vec<Result<(Vec<f64>, Vec<f64>)>> = current
            .par_chunks(nv)
            .map(|row| if collide { op.gain_and_frequency(row) } else { Ok((vec![0.0; nv], vec![0.0; nv])) })
            .collect();
        let mut next = vec![0.0; current.len()];
        for (i, r) in rows.into_iter().enumerate() {
            let (gain, nu) = r?;
            for k in 0..nv {
                let idx = i * nv + k;
                let a = nu[k] * tau[idx];
                let phi1 = if a < 1e-12 { tau[idx] } else { -(-a).exp_m1() / nu[k] };
                next[idx] = (-a).exp() * start[idx] + phi1 * gain[k];
            }
        }
        let inc = next
            .iter()
            .zip(&current)
            .enumerate()
            .map(|(idx, (a, b))| {
                let k = idx % nv;
                weight(t1, nodes[k], &wp) * (a - b).abs() / sm[k]
            })
            .fold(0.0, f64::max);
        increments.push(inc);
        current = next;
        if inc <= cfg.picard_tol {
            converged = true;
            break;
        }
    }
    Ok(PicardOutcome {
        field: DistributionField { grid: grid.clone(), values: current, time: t1, representation: Representation::Absolute },
        iterations: increments.len(),
        increments,
        converged,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelaxationRecord {
    pub t: f64,
    pub mass: f64,
    pub momentum: [f64; 3],
    pub energy: f64,
    /// `int |F - M_F|` against the Maxwellian with the same moments.
    pub distance_to_equilibrium: f64,
    pub min_value: f64,
    pub picard_iterations: usize,
}

/// Spatially homogeneous relaxation `d_t F = Q(F, F)` with the same
/// positivity-preserving iteration per step.
pub fn relax_homogeneous(op: &LatticeCollision, initial: &[f64], dt: f64, steps: usize, tol: f64, max_iter: usize) -> Result<Vec<RelaxationRecord>> {
    let lat = *op.lattice();
    lat.check(initial)?;
    if let Some(index) = initial.iter().position(|f| *f < 0.0) {
        return Err(Error::NonPositiveInput { index, value: initial[index] });
    }
    let record = |t: f64, f: &[f64], iters: usize| -> RelaxationRecord {
        let nodes = lat.nodes();
        let dv = lat.cell_volume();
        let mass: f64 = f.iter().sum::<f64>() * dv;
        let mut momentum = [0.0; 3];
        let mut energy = 0.0;
        for (x, v) in f.iter().zip(&nodes) {
            for c in 0..3 {
                momentum[c] += x * v[c] * dv;
            }
            energy += x * crate::vec3::norm2(*v) * dv;
        }
        let u = momentum.map(|m| m / mass);
        let temp = (energy / mass - crate::vec3::norm2(u)) / 3.0;
        let norm = mass / (2.0 * std::f64::consts::PI * temp).powf(1.5);
        let distance = f
            .iter()
            .zip(&nodes)
            .map(|(x, v)| (x - norm * (-crate::vec3::norm2(crate::vec3::sub(*v, u)) / (2.0 * temp)).exp()).abs() * dv)
            .sum();
        let min_value = f.iter().copied().fold(f64::INFINITY, f64::min);
        RelaxationRecord { t, mass, momentum, energy, distance_to_equilibrium: distance, min_value, picard_iterations: iters }
    };
    let mut f = initial.to_vec();
    let mut out = vec![record(0.0, &f, 0)];
    for step in 1..=steps {
        let start = f.clone();
        let mut iters = 0;
        for _ in 0..max_iter {
            iters += 1;
            let (gain, nu) = op.gain_and_frequency(&f)?;
            let next: Vec<f64> = (0..f.len())
                .map(|k| {
                    let a = nu[k] * dt;
                    let phi1 = if a < 1e-12 { dt } else { -(-a).exp_m1() / nu[k] };
                    (-a).exp() * start[k] + phi1 * gain[k]
                })
                .collect();
            let inc = next.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            f = next;
            if inc <= tol {
                break;
            }
        }
        out.push(record(step as f64 * dt, &f, iters));
    }
    Ok(out)
}
