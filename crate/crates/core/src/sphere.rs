//! Octahedrally symmetric Lebedev rules on the unit sphere. Weights sum to
//! `4 pi`. Every node direction is a multiple of an integer vector, which the
//! collision stencils rely on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::Vec3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereRule {
    pub order: usize,
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
}

/// A pair `{omega, -omega}` of antipodal nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereLine {
    /// Integer direction, `omega = dir / |dir|`.
    pub dir: [i64; 3],
    pub omega: Vec3,
    /// Sum of the weights of both antipodes.
    pub weight: f64,
}

fn signed_perms(base: [i64; 3], out: &mut Vec<[i64; 3]>) {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for p in perms {
        for signs in 0..8 {
            let mut v = [0i64; 3];
            for k in 0..3 {
                let s = if (signs >> k) & 1 == 1 { -1 } else { 1 };
                v[k] = s * base[p[k]];
            }
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
}

impl SphereRule {
    pub fn lebedev(order: usize) -> Result<Self> {
        // (integer generator, weight relative to 4 pi)
        let gens: &[([i64; 3], f64)] = match order {
            6 => &[([1, 0, 0], 1.0 / 6.0)],
            14 => &[([1, 0, 0], 1.0 / 15.0), ([1, 1, 1], 3.0 / 40.0)],
            26 => &[([1, 0, 0], 1.0 / 21.0), ([1, 1, 0], 4.0 / 105.0), ([1, 1, 1], 9.0 / 280.0)],
            50 => &[
                ([1, 0, 0], 4.0 / 315.0),
                ([1, 1, 0], 64.0 / 2835.0),
                ([1, 1, 1], 27.0 / 1280.0),
                ([1, 1, 3], 14641.0 / 725760.0),
            ],
            _ => return Err(Error::InvalidParams(format!("unsupported sphere quadrature order {order} (use 6, 14, 26 or 50)"))),
        };
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for &(g, w) in gens {
            let mut dirs = Vec::new();
            signed_perms(g, &mut dirs);
            for d in dirs {
                let n = ((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64).sqrt();
                points.push([d[0] as f64 / n, d[1] as f64 / n, d[2] as f64 / n]);
                weights.push(4.0 * std::f64::consts::PI * w);
            }
        }
        if points.len() != order {
            return Err(Error::InvalidParams(format!("sphere rule of order {order} built {} nodes", points.len())));
        }
        Ok(Self { order, points, weights })
    }

    pub fn integrate(&self, f: impl Fn(Vec3) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(*p)).sum()
    }

    /// Antipodal pairs; the first nonzero component of `dir` is positive.
    pub fn lines(&self) -> Vec<SphereLine> {
        let mut lines: Vec<SphereLine> = Vec::new();
        for (p, &w) in self.points.iter().zip(&self.weights) {
            let dir = integer_direction(*p);
            let first = dir.iter().copied().find(|c| *c != 0).unwrap_or(1);
            let canon = if first < 0 { [-dir[0], -dir[1], -dir[2]] } else { dir };
            if let Some(line) = lines.iter_mut().find(|l| l.dir == canon) {
                line.weight += w;
            } else {
                let n = ((canon[0] * canon[0] + canon[1] * canon[1] + canon[2] * canon[2]) as f64).sqrt();
                lines.push(SphereLine {
                    dir: canon,
                    omega: [canon[0] as f64 / n, canon[1] as f64 / n, canon[2] as f64 / n],
                    weight: w,
                });
            }
        }
        lines
    }
}

fn integer_direction(p: Vec3) -> [i64; 3] {
    // Nodes are multiples of small integer vectors; recover them.
    for scale in 1..=12 {
        let m = p.iter().map(|c| c.abs()).filter(|c| *c > 1e-12).fold(f64::INFINITY, f64::min);
        let v = p.map(|c| c / m * scale as f64);
        if v.iter().all(|c| (c - c.round()).abs() < 1e-9) {
            return v.map(|c| c.round() as i64);
        }
    }
    unreachable!("sphere node is not a rational direction")
}
