use serde::{Deserialize, Serialize};

use super::picard::picard_solve;
use super::step::Stepper;
use super::{boundary_nodes, BoundaryDatum, DistributionField, Representation};
use crate::diagnostics::{norm_report, weighted_norm, NormReport, NormSettings, WeightSpec};
use crate::error::{Error, Result};
use crate::field::{charge_density, continuity_residual, current_density, field_energy_step_residual, solve_poisson, PotentialField};
use crate::vec3;

/// Per-step solver bookkeeping beside the norm row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub hull_exits: usize,
    pub picard_iterations: usize,
    pub picard_converged: bool,
    /// Smallest value of `F = mu + sqrt_mu f`, relative to its largest.
    pub min_absolute: f64,
    /// Mean that the Poisson solve removed from the source.
    pub projection: f64,
}

#[derive(Clone, Debug)]
pub struct RunHistory {
    pub rows: Vec<NormReport>,
    pub steps: Vec<StepRecord>,
    pub final_state: DistributionField,
    pub final_potential: PotentialField,
    /// `|w f0|_inf + sup_s e^{lambda_0 s^rho} |w g(s)|_inf`.
    pub data_size: f64,
}

impl RunHistory {
    /// `(t, |w f(t)|_inf)` pairs.
    pub fn sup_series(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.t, r.sup_w)).collect()
    }
}

fn potential_of(f: &DistributionField, enabled: bool) -> Result<PotentialField> {
    if !enabled {
        return Ok(PotentialField::zero(&f.grid.space));
    }
    let pert = f.to_perturbation();
    let rho = charge_density(&f.grid.velocity, &pert.values)?;
    solve_poisson(&rho, &f.grid.space)
}

/// `max |f0 - g(0)|` over the incoming lattice points of the boundary nodes.
fn compatibility_gap(f: &DistributionField, boundary: &BoundaryDatum) -> f64 {
    let grid = &f.grid;
    let nodes = grid.velocity.nodes();
    let pert = f.to_perturbation();
    let mut gap: f64 = 0.0;
    for i in boundary_nodes(grid) {
        let x = grid.space.position(i);
        let n = grid.space.geometry.normal_unchecked(x);
        for (k, v) in nodes.iter().enumerate() {
            if vec3::dot(n, *v) < 0.0 {
                gap = gap.max((pert.row(i)[k] - boundary.value(f.time, x, *v)).abs());
            }
        }
    }
    gap
}

fn min_absolute(f: &DistributionField) -> f64 {
    let abs = f.to_absolute();
    let max = abs.values.iter().copied().fold(f64::MIN, f64::max);
    let min = abs.values.iter().copied().fold(f64::MAX, f64::min);
    if max > 0.0 {
        min / max
    } else {
        min
    }
}

/// Advances `initial` to `config.t_end`, solving the Poisson equation from
/// `f_n` before each step. Perturbations use the exponential Duhamel step,
/// absolute fields the positivity-preserving iteration. A norm row is
/// recorded after every step.
pub fn run_simulation(stepper: &mut Stepper, initial: &DistributionField, boundary: BoundaryDatum, norms: &NormSettings) -> Result<RunHistory> {
    run_simulation_with(stepper, initial, boundary, norms, &mut |_, _| Ok(()))
}

/// [`run_simulation`] that hands the state and its potential to `observe`
/// at the start and after every step.
pub fn run_simulation_with(
    stepper: &mut Stepper,
    initial: &DistributionField,
    mut boundary: BoundaryDatum,
    norms: &NormSettings,
    observe: &mut dyn FnMut(&DistributionField, &PotentialField) -> Result<()>,
) -> Result<RunHistory> {
    let cfg = stepper.config;
    let wp = stepper.weights;
    if initial.grid != stepper.grid {
        return Err(Error::LatticeMismatch { expected: stepper.grid.len(), got: initial.grid.len() });
    }
    initial.check_nonnegative()?;
    stepper.reset();
    boundary.update_balance(&initial.to_perturbation());
    let gap = compatibility_gap(initial, &boundary);
    if gap > cfg.compatibility_tol {
        return Err(Error::CompatibilityViolated(gap));
    }
    let steps = cfg.steps();
    let sample_times: Vec<f64> = (0..=steps.min(200)).map(|k| initial.time + cfg.t_end * k as f64 / steps.clamp(1, 200) as f64).collect();
    let data_size = weighted_norm(&initial.to_perturbation(), &WeightSpec::Dynamic(wp), f64::INFINITY) + boundary.weighted_sup(&initial.grid, &sample_times, &wp);
    if data_size > cfg.delta_star * cfg.smallness_m {
        return Err(Error::SmallnessViolated { time: initial.time, norm: data_size, threshold: cfg.delta_star * cfg.smallness_m });
    }

    let absolute = initial.representation == Representation::Absolute;
    let mut f = initial.clone();
    let mut potential = potential_of(&f, cfg.poisson)?;
    let pert0 = f.to_perturbation();
    let mut rows = vec![norm_report(&pert0, &potential, &wp, norms, norms.alpha_every > 0)?];
    let mut records = vec![StepRecord { t: f.time, min_absolute: min_absolute(&f), projection: potential.projection, ..Default::default() }];
    observe(&f, &potential)?;
    let lat = f.grid.velocity;
    let mut rho = charge_density(&lat, &pert0.values)?;
    let mut current = current_density(&lat, &pert0.values)?;

    for n in 1..=steps {
        let (next, mut record) = advance(stepper, &f, &potential, &mut boundary, absolute)?;
        let pert = next.to_perturbation();
        let next_potential = potential_of(&next, cfg.poisson)?;
        let next_rho = charge_density(&lat, &pert.values)?;
        let next_current = current_density(&lat, &pert.values)?;
        let with_alpha = norms.alpha_every > 0 && (n % norms.alpha_every == 0 || n == steps);
        let mut row = norm_report(&pert, &next_potential, &wp, norms, with_alpha)?;
        row.mass_residual = continuity_residual(&f.grid.space, (&rho, &next_rho), (&current, &next_current), cfg.dt);
        row.energy_identity_residual = if cfg.poisson {
            field_energy_step_residual((&potential, &current), (&next_potential, &next_current), cfg.dt)
        } else {
            0.0
        };
        record.projection = next_potential.projection;
        let sup = row.sup_w;
        rows.push(row);
        records.push(record);
        f = next;
        potential = next_potential;
        rho = next_rho;
        current = next_current;
        observe(&f, &potential)?;
        if !(sup <= cfg.smallness_m) {
            return Err(Error::SmallnessViolated { time: f.time, norm: sup, threshold: cfg.smallness_m });
        }
    }
    Ok(RunHistory { rows, steps: records, final_state: f, final_potential: potential, data_size })
}

/// One step from `f` with the potential of `f`: Picard for absolute fields,
/// the Duhamel step for perturbations, then the in-flow values.
fn advance(stepper: &mut Stepper, f: &DistributionField, potential: &PotentialField, boundary: &mut BoundaryDatum, absolute: bool) -> Result<(DistributionField, StepRecord)> {
    boundary.update_balance(&f.to_perturbation());
    let mut record = StepRecord::default();
    let mut next = if absolute {
        let out = picard_solve(stepper, f, potential, boundary)?;
        record.picard_iterations = out.iterations;
        record.picard_converged = out.converged;
        out.field
    } else {
        let out = stepper.duhamel_step(f, potential, boundary)?;
        record.hull_exits = out.hull_exits;
        out.field
    };
    boundary.update_balance(&next.to_perturbation());
    stepper.apply_incoming(&mut next, boundary);
    if next.values.iter().any(|x| !x.is_finite()) {
        return Err(Error::IntegratorFailure(format!("non-finite value at t = {}", next.time)));
    }
    record.t = next.time;
    record.min_absolute = min_absolute(&next);
    Ok((next, record))
}

/// Step-by-step driver for callers that own the loop.
pub struct Simulation {
    pub stepper: Stepper,
    boundary: BoundaryDatum,
    state: DistributionField,
    potential: PotentialField,
}

impl Simulation {
    /// Checks the data as [`run_simulation`] does and solves for the initial potential.
    pub fn new(mut stepper: Stepper, initial: DistributionField, mut boundary: BoundaryDatum) -> Result<Self> {
        if initial.grid != stepper.grid {
            return Err(Error::LatticeMismatch { expected: stepper.grid.len(), got: initial.grid.len() });
        }
        initial.check_nonnegative()?;
        stepper.reset();
        boundary.update_balance(&initial.to_perturbation());
        let gap = compatibility_gap(&initial, &boundary);
        if gap > stepper.config.compatibility_tol {
            return Err(Error::CompatibilityViolated(gap));
        }
        let potential = potential_of(&initial, stepper.config.poisson)?;
        Ok(Self { stepper, boundary, state: initial, potential })
    }

    pub fn step(&mut self) -> Result<StepRecord> {
        let absolute = self.state.representation == Representation::Absolute;
        let (next, mut record) = advance(&mut self.stepper, &self.state, &self.potential, &mut self.boundary, absolute)?;
        self.potential = potential_of(&next, self.stepper.config.poisson)?;
        record.projection = self.potential.projection;
        self.state = next;
        Ok(record)
    }

    pub fn state(&self) -> &DistributionField {
        &self.state
    }

    pub fn potential(&self) -> &PotentialField {
        &self.potential
    }

    /// `|w f|_inf` of the perturbation at the current time.
    pub fn weighted_sup(&self) -> f64 {
        weighted_norm(&self.state.to_perturbation(), &WeightSpec::Dynamic(self.stepper.weights), f64::INFINITY)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityReport {
    pub distances: Vec<f64>,
    /// `max_t |w (f - g)(t)|_{L^{1+delta}} / d` for every initial distance.
    pub constants: Vec<f64>,
    /// `(t, ratio)` series for every initial distance.
    pub series: Vec<Vec<(f64, f64)>>,
}

impl StabilityReport {
    /// Largest relative spread `|C_i / C_0 - 1|`.
    pub fn spread(&self) -> f64 {
        let c0 = self.constants[0];
        self.constants.iter().map(|c| (c / c0 - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Runs `base` and `base + d e` for every `d`, with `e` normalised to unit
/// weighted `L^{1+delta}` norm, and records the distance ratio over time.
pub fn stability_pair(
    stepper: &Stepper,
    base: &DistributionField,
    direction: &DistributionField,
    distances: &[f64],
    boundary: &BoundaryDatum,
    delta: f64,
) -> Result<StabilityReport> {
    if base.representation != Representation::Perturbation || direction.grid != base.grid {
        return Err(Error::InvalidParams("stability_pair expects perturbations on one grid".into()));
    }
    let wp = stepper.weights;
    let q = 1.0 + delta;
    let dist = |a: &DistributionField, b: &DistributionField| -> f64 {
        let mut diff = a.clone();
        diff.values.iter_mut().zip(&b.values).for_each(|(x, y)| *x -= y);
        weighted_norm(&diff, &WeightSpec::Dynamic(wp), q)
    };
    let unit = {
        let mut zero = direction.clone();
        zero.values.iter_mut().for_each(|x| *x = 0.0);
        dist(direction, &zero)
    };
    if !(unit > 0.0) {
        return Err(Error::InvalidParams("perturbation direction is zero".into()));
    }
    let trajectory = |start: &DistributionField| -> Result<Vec<DistributionField>> {
        let mut s = stepper.clone();
        s.reset();
        let mut b = boundary.clone();
        let mut f = start.clone();
        let mut out = vec![f.clone()];
        for _ in 0..s.config.steps() {
            b.update_balance(&f);
            let potential = potential_of(&f, s.config.poisson)?;
            let mut next = s.duhamel_step(&f, &potential, &b)?.field;
            b.update_balance(&next);
            s.apply_incoming(&mut next, &b);
            out.push(next.clone());
            f = next;
        }
        Ok(out)
    };
    let reference = trajectory(base)?;
    let mut constants = Vec::new();
    let mut series = Vec::new();
    for &d in distances {
        let mut start = base.clone();
        start.values.iter_mut().zip(&direction.values).for_each(|(x, e)| *x += d * e / unit);
        let initial = dist(&start, base);
        let other = trajectory(&start)?;
        let s: Vec<(f64, f64)> = reference.iter().zip(&other).map(|(a, b)| (a.time, dist(b, a) / initial)).collect();
        constants.push(s.iter().map(|p| p.1).fold(0.0, f64::max));
        series.push(s);
    }
    Ok(StabilityReport { distances: distances.to_vec(), constants, series })
}
