//! Dense matrix of the regular part of `K = K2 - K1` on a velocity lattice.
//!
//! Entries with `u_j = v_i` are kept in a separate diagonal, so the matrix
//! itself vanishes wherever `|u - v| <= eps` on any lattice with spacing
//! larger than `eps`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::lattice_op::LatticeCollision;
use super::CollisionParams;
use crate::error::{Error, Result};
use crate::lattice::VelocityLattice;

const FORMAT: &str = "vpb-kernel-table";

#[derive(Clone, Debug)]
pub struct KernelTable {
    pub params: CollisionParams,
    /// Off-diagonal part, row-major by output velocity.
    pub matrix: Array2<f64>,
    pub diagonal: Vec<f64>,
    /// Lattice collision frequency consistent with the matrix.
    pub nu: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    lattice: VelocityLattice,
    gamma: f64,
    epsilon: f64,
    sphere_order: usize,
    rows: usize,
    cols: usize,
    blocks: Vec<String>,
    checksum: String,
}

impl KernelTable {
    pub fn build(op: &LatticeCollision) -> Self {
        let lat = *op.lattice();
        let n = lat.n;
        let len = lat.len();
        let mut matrix = Array2::<f64>::zeros((len, len));
        let sm = op.sqrt_mu.clone();
        let mu = &op.mu;
        let nl = op.line_count();
        let nd = op.offset_count();
        let plane = n * n;
        matrix
            .as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(plane * len)
            .enumerate()
            .for_each(|(ix, rows)| {
                for di in 0..nd {
                    for l in 0..nl {
                        let Some(t) = op.term(di, l) else { continue };
                        if ix < t.lo[0] || ix >= t.hi[0] {
                            continue;
                        }
                        let dflat = op.flat_offset(t.d);
                        let o1 = op.flat_offset(t.o1);
                        let o2 = op.flat_offset(t.o2);
                        let (k1, k2) = (&op.classes[t.c1].corners, &op.classes[t.c2].corners);
                        for iy in t.lo[1]..t.hi[1] {
                            for iz in t.lo[2]..t.hi[2] {
                                let i = lat.flat(ix, iy, iz);
                                let row = &mut rows[(i - ix * plane) * len..(i - ix * plane + 1) * len];
                                let u = (i as i64 + dflat) as usize;
                                let c = sm[i] * t.w * mu[u];
                                let j1 = i as i64 + o1;
                                for (off, wc) in k1 {
                                    let col = (j1 + ((off[0] * n + off[1]) * n + off[2]) as i64) as usize;
                                    row[col] += c * wc / sm[col];
                                }
                                let j2 = i as i64 + o2;
                                for (off, wc) in k2 {
                                    let col = (j2 + ((off[0] * n + off[1]) * n + off[2]) as i64) as usize;
                                    row[col] += c * wc / sm[col];
                                }
                                row[u] -= sm[i] * t.w * sm[u];
                            }
                        }
                    }
                }
            });
        let mut diagonal = vec![0.0; len];
        for i in 0..len {
            diagonal[i] = matrix[(i, i)] + op.self_weight * mu[i];
            matrix[(i, i)] = 0.0;
        }
        let nu = op.nu_lattice().to_vec();
        Self::conserve(op, &mut matrix, &mut diagonal, &nu);
        Self { params: *op.params(), matrix, diagonal, nu }
    }

    /// Rank-5 update matching `LatticeCollision::apply_k_direct`: subtracts
    /// `A G^-1 Phi^T sqrt_mu (K - nu)` with `A_ik = sqrt_mu_i nu_i phi_k(v_i)`.
    fn conserve(op: &LatticeCollision, matrix: &mut Array2<f64>, diagonal: &mut [f64], nu: &[f64]) {
        let Some(inv) = op.inverse_gram(&op.correction_weight(), 5) else { return };
        let len = diagonal.len();
        let sm = &op.sqrt_mu;
        let phi = &op.invariants;
        let mut c = Array2::<f64>::zeros((5, len));
        for (i, row) in matrix.rows().into_iter().enumerate() {
            for k in 0..5 {
                c.row_mut(k).scaled_add(sm[i] * phi[i][k], &row);
            }
        }
        for j in 0..len {
            for k in 0..5 {
                c[(k, j)] += sm[j] * phi[j][k] * (diagonal[j] - nu[j]);
            }
        }
        let inv = Array2::from_shape_fn((5, 5), |(a, b)| inv[(a, b)]);
        let b = inv.dot(&c);
        let a = Array2::from_shape_fn((len, 5), |(i, k)| sm[i] * nu[i] * phi[i][k]);
        ndarray::linalg::general_mat_mul(-1.0, &a, &b, 1.0, matrix);
        for i in 0..len {
            diagonal[i] += matrix[(i, i)];
            matrix[(i, i)] = 0.0;
        }
    }

    pub fn lattice(&self) -> &VelocityLattice {
        &self.params.lattice
    }

    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.lattice().check(f)?;
        let view = ArrayView2::from_shape((f.len(), 1), f).expect("column");
        let out = self.matrix.dot(&view);
        Ok(out.iter().zip(&self.diagonal).zip(f).map(|((k, d), x)| k + d * x).collect())
    }

    /// `K` applied to every column of `f` (velocity along rows).
    pub fn apply_columns(&self, f: ArrayView2<f64>) -> Result<Array2<f64>> {
        if f.nrows() != self.matrix.ncols() {
            return Err(Error::LatticeMismatch { expected: self.matrix.ncols(), got: f.nrows() });
        }
        let mut out = self.matrix.dot(&f);
        for (mut row, (d, src)) in out.rows_mut().into_iter().zip(self.diagonal.iter().zip(f.rows())) {
            row.scaled_add(*d, &src);
        }
        Ok(out)
    }

    /// Largest matrix entry among pairs with `|u_j - v_i| <= eps`.
    pub fn max_entry_within(&self, eps: f64) -> f64 {
        let lat = self.lattice();
        let nodes = lat.nodes();
        let mut worst: f64 = 0.0;
        for (i, vi) in nodes.iter().enumerate() {
            for (j, uj) in nodes.iter().enumerate() {
                if crate::vec3::norm(crate::vec3::sub(*vi, *uj)) <= eps {
                    worst = worst.max(self.matrix[(i, j)].abs());
                }
            }
        }
        worst
    }

    fn data_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(8 * (self.matrix.len() + 2 * self.diagonal.len()));
        for x in self.matrix.iter().chain(&self.diagonal).chain(&self.nu) {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        bytes
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let data = self.data_bytes();
        let header = Header {
            format: FORMAT.into(),
            version: 1,
            lattice: self.params.lattice,
            gamma: self.params.gamma,
            epsilon: self.params.epsilon,
            sphere_order: self.params.sphere_order,
            rows: self.matrix.nrows(),
            cols: self.matrix.ncols(),
            blocks: vec!["matrix".into(), "diagonal".into(), "nu".into()],
            checksum: format!("sha256:{:x}", Sha256::digest(&data)),
        };
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let json = serde_json::to_string(&header).map_err(|e| Error::Parse(e.to_string()))?;
        file.write_all(json.as_bytes())?;
        file.write_all(b"\n")?;
        file.write_all(&data)?;
        file.flush()?;
        Ok(())
    }

    /// Loads a table and checks it against the expected lattice.
    pub fn read(path: &Path, expected: &VelocityLattice) -> Result<Self> {
        let mut raw = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut raw)?;
        let nl = raw.iter().position(|b| *b == b'\n').ok_or_else(|| Error::Parse("kernel table has no header line".into()))?;
        let header: Header = serde_json::from_slice(&raw[..nl]).map_err(|e| Error::Parse(format!("kernel table header: {e}")))?;
        if header.format != FORMAT {
            return Err(Error::Parse(format!("not a kernel table (format {})", header.format)));
        }
        if header.lattice != *expected {
            return Err(Error::LatticeMismatch { expected: expected.len(), got: header.lattice.len() });
        }
        let data = &raw[nl + 1..];
        let len = header.lattice.len();
        if header.rows != len || header.cols != len || data.len() != 8 * (len * len + 2 * len) {
            return Err(Error::Parse("kernel table size does not match its header".into()));
        }
        if format!("sha256:{:x}", Sha256::digest(data)) != header.checksum {
            return Err(Error::Parse("kernel table checksum mismatch".into()));
        }
        let values: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let matrix = Array2::from_shape_vec((len, len), values[..len * len].to_vec()).expect("square");
        let params = CollisionParams::new(header.gamma, header.epsilon, header.sphere_order, header.lattice)?;
        Ok(Self { params, matrix, diagonal: values[len * len..len * len + len].to_vec(), nu: values[len * len + len..].to_vec() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn op(n: usize) -> LatticeCollision {
        let lat = VelocityLattice::new(n, 6.0).unwrap();
        LatticeCollision::new(&CollisionParams::new(-1.0, 0.01, 26, lat).unwrap()).unwrap()
    }

    #[test]
    fn table_agrees_with_direct_evaluation() {
        let c = op(10);
        let table = KernelTable::build(&c);
        let sm = c.sqrt_maxwellian().to_vec();
        let a = table.apply(&sm).unwrap();
        let b = c.apply_k_direct(&sm).unwrap();
        let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-8 * scale, "{x} vs {y}");
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let f: Vec<f64> = sm.iter().map(|s| s * rng.gen_range(-1.0..1.0)).collect();
        let a = table.apply(&f).unwrap();
        let b = c.apply_k_direct(&f).unwrap();
        let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn table_vanishes_inside_cutoff_and_is_finite() {
        let table = KernelTable::build(&op(8));
        assert!(table.matrix.iter().all(|x| x.is_finite()));
        assert_eq!(table.max_entry_within(0.01), 0.0);
    }

    #[test]
    fn table_roundtrip_and_mismatch() {
        let c = op(6);
        let table = KernelTable::build(&c);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.bin");
        table.write(&path).unwrap();
        let back = KernelTable::read(&path, c.lattice()).unwrap();
        assert_eq!(back.matrix, table.matrix);
        assert_eq!(back.diagonal, table.diagonal);
        let other = VelocityLattice::new(8, 6.0).unwrap();
        assert!(matches!(KernelTable::read(&path, &other), Err(Error::LatticeMismatch { .. })));
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(KernelTable::read(&path, c.lattice()), Err(Error::Parse(_))));
    }
}
