//! Time integration of the perturbed system: exponential Duhamel steps along
//! backward characteristics, in-flow boundary data, and the positivity
//! preserving iteration for the absolute distribution.

mod boundary;
mod picard;
mod run;
mod step;

pub use boundary::{boundary_flux_compatibility, BoundaryDatum, BoundaryProfile};
pub use picard::{picard_solve, relax_homogeneous, PicardOutcome, RelaxationRecord};
pub use run::{run_simulation, run_simulation_with, stability_pair, Simulation, RunHistory, StabilityReport, StepRecord};
pub use step::{Interpolation, StepOutcome, Stepper};
pub(crate) use boundary::boundary_nodes;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpatialGrid;
use crate::lattice::VelocityLattice;
use crate::vec3::Vec3;
use crate::weights::{maxwellian, sqrt_maxwellian};

/// Spatial nodes times the velocity lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub space: SpatialGrid,
    pub velocity: VelocityLattice,
}

impl PhaseGrid {
    pub fn len(&self) -> usize {
        self.space.nodes * self.velocity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// `f` with `F = mu + sqrt_mu f`.
    Perturbation,
    /// `F` itself.
    Absolute,
}

/// Values on a phase grid, row-major `[spatial node][velocity]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionField {
    pub grid: PhaseGrid,
    pub values: Vec<f64>,
    pub time: f64,
    pub representation: Representation,
}

impl DistributionField {
    pub fn zeros(grid: &PhaseGrid, time: f64) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.len()], time, representation: Representation::Perturbation }
    }

    /// Perturbation sampled from `f(x, v)`.
    pub fn from_fn(grid: &PhaseGrid, time: f64, f: impl Fn(Vec3, Vec3) -> f64) -> Self {
        let nodes = grid.velocity.nodes();
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.space.nodes {
            let x = grid.space.position(i);
            values.extend(nodes.iter().map(|v| f(x, *v)));
        }
        Self { grid: grid.clone(), values, time, representation: Representation::Perturbation }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let len = self.grid.velocity.len();
        &self.values[i * len..(i + 1) * len]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.grid.velocity.len())
    }

    /// `F = mu + sqrt_mu f`; identity on absolute fields.
    pub fn to_absolute(&self) -> Self {
        if self.representation == Representation::Absolute {
            return self.clone();
        }
        let mu = self.grid.velocity.sample(maxwellian);
        let sm = self.grid.velocity.sample(sqrt_maxwellian);
        let len = mu.len();
        let values = self.values.iter().enumerate().map(|(k, f)| mu[k % len] + sm[k % len] * f).collect();
        Self { values, representation: Representation::Absolute, ..self.clone() }
    }

    /// `f = (F - mu) / sqrt_mu`; identity on perturbations.
    pub fn to_perturbation(&self) -> Self {
        if self.representation == Representation::Perturbation {
            return self.clone();
        }
        let mu = self.grid.velocity.sample(maxwellian);
        let sm = self.grid.velocity.sample(sqrt_maxwellian);
        let len = mu.len();
        let values = self.values.iter().enumerate().map(|(k, f)| (f - mu[k % len]) / sm[k % len]).collect();
        Self { values, representation: Representation::Perturbation, ..self.clone() }
    }

    /// Fails with the first negative value of an absolute field.
    pub fn check_nonnegative(&self) -> Result<()> {
        if self.representation != Representation::Absolute {
            return Ok(());
        }
        match self.values.iter().position(|f| *f < 0.0 || f.is_nan()) {
            Some(index) => Err(Error::NonPositiveInput { index, value: self.values[index] }),
            None => Ok(()),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Step size, horizon and iteration controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Continuation threshold on `|w f|_inf`.
    #[serde(alias = "smallness_M")]
    pub smallness_m: f64,
    /// Data must satisfy `|w f0|_inf + sup |w g| <= delta_star * smallness_m`.
    pub delta_star: f64,
    /// Steps between evaluations of the quadratic term.
    pub nonlinear_every: usize,
    /// Spatial stride of the nodes where the quadratic term is evaluated
    /// (linear interpolation in between).
    pub gain_stride: usize,
    pub interpolation: Interpolation,
    /// Solve the Poisson equation each step; off gives `E = 0`.
    pub poisson: bool,
    /// Tolerance of the compatibility check `f0 = g(0)` on the incoming set.
    pub compatibility_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_end: 1.0,
            picard_tol: 1e-10,
            picard_max_iter: 30,
            smallness_m: 1.0,
            delta_star: 0.5,
            nonlinear_every: 1,
            gain_stride: 1,
            interpolation: Interpolation::Cubic,
            poisson: true,
            compatibility_tol: 1e-9,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParams(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::InvalidParams(format!("picard_tol = {} must be positive", self.picard_tol)));
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::InvalidParams(format!("t_end = {} must be nonnegative", self.t_end)));
        }
        if !(self.smallness_m > 0.0 && self.delta_star > 0.0) {
            return Err(Error::InvalidParams("smallness_m and delta_star must be positive".into()));
        }
        if self.nonlinear_every == 0 || self.gain_stride == 0 || self.picard_max_iter == 0 {
            return Err(Error::InvalidParams("nonlinear_every, gain_stride and picard_max_iter must be at least 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

#[cfg(test)]
mod tests;
