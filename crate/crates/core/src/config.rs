//! TOML run configuration, admissibility checks at load, and the snapshot
//! file format.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::collision::CollisionParams;
use crate::diagnostics::{check_p_beta, NormSettings};
use crate::domain::DomainGeometry;
use crate::error::{Error, Result};
use crate::field::{charge_density, PotentialField, SpatialGrid};
use crate::lattice::VelocityLattice;
use crate::solver::{DistributionField, PhaseGrid, Representation, SolverConfig};
use crate::weights::WeightParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Equilibrium,
    HomogeneousRelaxation,
    SlabInflow,
    DecayStudy,
    InvariantSuite,
    StabilityPair,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainShape {
    Slab,
    Ball,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSection {
    pub shape: DomainShape,
    /// Slab length or ball radius.
    pub size: f64,
    pub nodes: usize,
}

impl Default for DomainSection {
    fn default() -> Self {
        Self { shape: DomainShape::Slab, size: 1.0, nodes: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollisionSection {
    pub epsilon: f64,
    pub sphere_order: usize,
    pub vmax: f64,
    pub lattice: usize,
}

impl Default for CollisionSection {
    fn default() -> Self {
        Self { epsilon: 0.01, sphere_order: 26, vmax: 5.0, lattice: 16 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialProfile {
    Zero,
    /// `sin(pi x / L) sqrt_mu`: vanishes on the boundary.
    Sine,
    /// `cos(pi x / L) sqrt_mu`.
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub profile: InitialProfile,
    /// Target `|w f0|_inf`.
    pub amplitude: f64,
    pub representation: Representation,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self { profile: InitialProfile::Sine, amplitude: 1e-3, representation: Representation::Perturbation }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    Zero,
    FluxBalanced,
    /// `g = amplitude e^{-decay_rate t^rho} sqrt_mu`.
    Maxwellian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundarySection {
    pub kind: BoundaryKind,
    pub amplitude: f64,
    pub decay_rate: f64,
}

impl Default for BoundarySection {
    fn default() -> Self {
        Self { kind: BoundaryKind::Zero, amplitude: 0.0, decay_rate: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    pub distances: Vec<f64>,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self { distances: vec![1e-3, 1e-4] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write a snapshot every this many steps (0: only the final state).
    pub snapshot_every: usize,
    /// Also write the collision kernel table (large: `8 n^6` bytes).
    pub kernel_table: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), snapshot_every: 0, kernel_table: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub threads: usize,
    pub domain: DomainSection,
    pub weights: WeightParams,
    pub collision: CollisionSection,
    pub solver: SolverConfig,
    pub norms: NormSettings,
    pub initial: InitialSection,
    pub boundary: BoundarySection,
    pub stability: StabilitySection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Equilibrium,
            seed: 0,
            threads: 0,
            domain: DomainSection::default(),
            weights: WeightParams::default(),
            collision: CollisionSection::default(),
            solver: SolverConfig::default(),
            norms: NormSettings::default(),
            initial: InitialSection::default(),
            boundary: BoundarySection::default(),
            stability: StabilitySection::default(),
            output: OutputSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Every violated condition, by name.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let w = &self.weights;
        if !(w.gamma > -3.0 && w.gamma < 0.0) {
            out.push("-3<gamma<0".to_string());
        }
        if !(w.theta * w.gamma + 2.0 > 0.0) {
            out.push("theta*gamma+2>0".to_string());
        }
        if !(w.theta > 0.0) {
            out.push("theta>0".to_string());
        }
        if !(w.vartheta > 0.0 && w.vartheta <= 0.125) {
            out.push("0<vartheta<=1/8".to_string());
        }
        if !(self.collision.epsilon > 0.0) {
            out.push("epsilon>0".to_string());
        }
        if !matches!(self.collision.sphere_order, 6 | 14 | 26 | 50) {
            out.push("sphere_order in {6,14,26,50}".to_string());
        }
        if self.collision.lattice < 2 || !(self.collision.vmax > 0.0) {
            out.push("lattice>=2 and vmax>0".to_string());
        }
        if self.domain.nodes < 3 || !(self.domain.size > 0.0) {
            out.push("domain nodes>=3 and size>0".to_string());
        }
        let n = &self.norms;
        if check_p_beta(n.p, n.beta, n.varpi).is_err() {
            out.push("p-beta strict inequality".to_string());
        }
        if !(n.delta > 0.0) {
            out.push("delta>0".to_string());
        }
        if !(n.alpha_eps > 0.0) {
            out.push("alpha_eps>0".to_string());
        }
        if let Err(e) = self.solver.validate() {
            out.push(format!("solver: {e}"));
        }
        if self.initial.amplitude < 0.0 || self.boundary.decay_rate < 0.0 {
            out.push("amplitude>=0 and decay_rate>=0".to_string());
        }
        if self.scenario == Scenario::StabilityPair && (self.stability.distances.is_empty() || self.stability.distances.iter().any(|d| !(*d > 0.0))) {
            out.push("stability distances>0".to_string());
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Admissibility(v.join("; ")))
        }
    }

    pub fn geometry(&self) -> DomainGeometry {
        match self.domain.shape {
            DomainShape::Slab => DomainGeometry::slab(self.domain.size),
            DomainShape::Ball => DomainGeometry::ball(self.domain.size),
        }
    }

    pub fn lattice(&self) -> Result<VelocityLattice> {
        VelocityLattice::new(self.collision.lattice, self.collision.vmax)
    }

    pub fn collision_params(&self) -> Result<CollisionParams> {
        CollisionParams::new(self.weights.gamma, self.collision.epsilon, self.collision.sphere_order, self.lattice()?)
    }

    pub fn phase_grid(&self) -> Result<PhaseGrid> {
        Ok(PhaseGrid { space: SpatialGrid::new(self.geometry(), self.domain.nodes)?, velocity: self.lattice()? })
    }
}

/// Identifier of a run: the first 12 hex digits of SHA-256 over the
/// configuration text and seed.
pub fn run_id(config: &RunConfig) -> String {
    let mut h = Sha256::new();
    h.update(config.to_toml().as_bytes());
    h.update(config.seed.to_le_bytes());
    h.finalize().iter().take(6).map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub run_id: String,
    pub time: f64,
    pub grid: PhaseGrid,
    pub representation: Representation,
    pub weights: WeightParams,
    /// Block lengths in order: `f`, `rho`, `phi`, `grad_phi` (x component).
    pub blocks: [usize; 4],
}

/// Snapshot: one JSON header line, then little-endian `f64` blocks for
/// `f`, `rho`, `phi` and `d_x phi`.
pub fn write_snapshot(path: &Path, run_id: &str, f: &DistributionField, potential: &PotentialField, weights: &WeightParams) -> Result<()> {
    let pert = f.to_perturbation();
    let rho = charge_density(&f.grid.velocity, &pert.values)?;
    let grad: Vec<f64> = potential.grad_phi.iter().map(|g| g[0]).collect();
    let header = SnapshotHeader {
        run_id: run_id.to_string(),
        time: f.time,
        grid: f.grid.clone(),
        representation: f.representation,
        weights: *weights,
        blocks: [f.values.len(), rho.len(), potential.phi.len(), grad.len()],
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut out, &header).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    out.write_all(b"\n")?;
    for block in [&f.values, &rho, &potential.phi, &grad] {
        for x in block.iter() {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub header: SnapshotHeader,
    pub f: Vec<f64>,
    pub rho: Vec<f64>,
    pub phi: Vec<f64>,
    pub grad_phi: Vec<f64>,
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let split = bytes.iter().position(|b| *b == b'\n').ok_or_else(|| Error::Parse("snapshot header missing".into()))?;
    let header: SnapshotHeader = serde_json::from_slice(&bytes[..split]).map_err(|e| Error::Parse(e.to_string()))?;
    let data = &bytes[split + 1..];
    let total: usize = header.blocks.iter().sum();
    if data.len() != 8 * total {
        return Err(Error::Parse(format!("snapshot data has {} bytes, expected {}", data.len(), 8 * total)));
    }
    let values: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let mut at = 0;
    let mut take = |n: usize| {
        let v = values[at..at + n].to_vec();
        at += n;
        v
    };
    let f = take(header.blocks[0]);
    let rho = take(header.blocks[1]);
    let phi = take(header.blocks[2]);
    let grad_phi = take(header.blocks[3]);
    Ok(Snapshot { header, f, rho, phi, grad_phi })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_load_and_echo_rho() {
        let cfg = RunConfig::from_toml("scenario = \"decay-study\"\n[weights]\ngamma = -1.0\ntheta = 1.0\nvartheta = 0.01\n").unwrap();
        assert_eq!(cfg.scenario, Scenario::DecayStudy);
        assert!((cfg.weights.rho() - 1.0 / 3.0).abs() < 1e-15);
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn admissibility_names_the_condition() {
        let e = RunConfig::from_toml("[weights]\ngamma = -1.0\ntheta = 2.0\nvartheta = 0.01\n").unwrap_err();
        assert!(matches!(&e, Error::Admissibility(m) if m.contains("theta*gamma+2>0")), "{e}");
        let e = RunConfig::from_toml("[norms]\np = 4.0\nbeta = 0.5\n").unwrap_err();
        assert!(matches!(&e, Error::Admissibility(m) if m.contains("p-beta strict inequality")), "{e}");
        let e = RunConfig::from_toml("[collision]\nepsilon = 0.0\n").unwrap_err();
        assert!(matches!(&e, Error::Admissibility(m) if m.contains("epsilon>0")), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn malformed_text_is_a_parse_error() {
        assert!(matches!(RunConfig::from_toml("scenario = \"nope\""), Err(Error::Parse(_))));
        assert!(matches!(RunConfig::from_toml("[solver]\nbogus = 1\n"), Err(Error::Parse(_))));
        assert!(matches!(RunConfig::load(Path::new("/nonexistent/config.toml")), Err(Error::Parse(_))));
    }

    #[test]
    fn snapshot_roundtrip() {
        let cfg = RunConfig { domain: DomainSection { nodes: 5, ..Default::default() }, collision: CollisionSection { lattice: 4, ..Default::default() }, ..Default::default() };
        let grid = cfg.phase_grid().unwrap();
        let f = DistributionField::from_fn(&grid, 0.25, |x, v| x[0] + v[1]);
        let potential = PotentialField::zero(&grid.space);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.snap");
        let id = run_id(&cfg);
        assert_eq!(id.len(), 12);
        write_snapshot(&path, &id, &f, &potential, &cfg.weights).unwrap();
        let s = read_snapshot(&path).unwrap();
        assert_eq!(s.header.run_id, id);
        assert_eq!(s.header.time, 0.25);
        assert_eq!(s.f, f.values);
        assert_eq!(s.rho.len(), 5);
        assert_eq!(s.phi, potential.phi);
    }
}
