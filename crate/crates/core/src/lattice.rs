//! Truncated cell-centered velocity lattice on `[-vmax, vmax]^3`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityLattice {
    /// Nodes per axis.
    pub n: usize,
    pub vmax: f64,
}

impl VelocityLattice {
    pub fn new(n: usize, vmax: f64) -> Result<Self> {
        if n < 2 || !(vmax > 0.0) {
            return Err(Error::InvalidParams(format!("velocity lattice needs n >= 2 and vmax > 0 (got n = {n}, vmax = {vmax})")));
        }
        Ok(Self { n, vmax })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.vmax / self.n as f64
    }

    /// Quadrature weight of a single node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn coord(&self, k: usize) -> f64 {
        -self.vmax + (k as f64 + 0.5) * self.spacing()
    }

    #[inline]
    pub fn flat(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.n + iy) * self.n + iz
    }

    #[inline]
    pub fn unflat(&self, k: usize) -> [usize; 3] {
        [k / (self.n * self.n), (k / self.n) % self.n, k % self.n]
    }

    pub fn node(&self, k: usize) -> Vec3 {
        let [a, b, c] = self.unflat(k);
        [self.coord(a), self.coord(b), self.coord(c)]
    }

    pub fn nodes(&self) -> Vec<Vec3> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(Vec3) -> f64) -> Vec<f64> {
        (0..self.len()).map(|k| f(self.node(k))).collect()
    }

    /// Lattice quadrature of a sampled profile.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn check(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::LatticeMismatch { expected: self.len(), got: values.len() });
        }
        Ok(())
    }

    /// Trilinear interpolation with zero extension beyond the outermost nodes.
    pub fn interpolate(&self, values: &[f64], v: Vec3) -> Option<f64> {
        let h = self.spacing();
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for k in 0..3 {
            let s = (v[k] + self.vmax) / h - 0.5;
            if s < 0.0 || s > (self.n - 1) as f64 {
                return None;
            }
            let b = (s.floor() as usize).min(self.n - 2);
            base[k] = b;
            frac[k] = s - b as f64;
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for k in 0..3 {
                let up = (corner >> k) & 1 == 1;
                w *= if up { frac[k] } else { 1.0 - frac[k] };
                idx[k] = base[k] + usize::from(up);
            }
            if w != 0.0 {
                acc += w * values[self.flat(idx[0], idx[1], idx[2])];
            }
        }
        Some(acc)
    }
}
