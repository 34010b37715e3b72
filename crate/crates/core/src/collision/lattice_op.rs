//! Discrete collision operator on the velocity lattice.
//!
//! The double integral over `(u, omega)` runs over lattice offsets `d = u - v`
//! and antipodal Lebedev lines. Every line direction is an integer vector
//! `l`, so the post-collision shift `a = ((d.l)/|l|^2) l` lands on one of
//! `|l|^2` fixed fractional offsets; the profile interpolated at each offset
//! is precomputed once per evaluation and every term becomes a shifted
//! product of lattice arrays.
//!
//! Interpolation acts on the profile divided by the Maxwellian. Since
//! `mu(u') mu(v') = mu(u) mu(v)`, the Maxwellian is then reproduced exactly.
//! A term whose post-collision stencil leaves the lattice is dropped from
//! both gain and loss, which keeps `Q(mu, mu) = 0` and exact conservation on
//! the axis lines.
//!
//! Off the axis lines trilinear interpolation leaves an `O(h^2)` defect in the
//! collision invariants. The public operators remove it with a smallest
//! weighted change of the gain that matches its moments `1, v, |v|^2` to those
//! of the loss. The change vanishes wherever the raw operator is already
//! conservative, so the Maxwellian stays an exact equilibrium.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;

use super::{chi, CollisionParams};
use crate::error::Result;
use crate::kinematics::chi_tilde;
use crate::lattice::VelocityLattice;
use crate::quadrature;
use crate::sphere::SphereRule;
use crate::weights::{maxwellian, sqrt_maxwellian};

/// Interpolation offset shared by several (line, residue) pairs.
#[derive(Clone, Debug)]
pub(crate) struct FracClass {
    pub up: [bool; 3],
    /// `(corner offset, weight)` with nonzero weight only.
    pub corners: Vec<([usize; 3], f64)>,
}

#[derive(Clone, Debug)]
struct LineStencil {
    dir: [i64; 3],
    q: i64,
    /// For each residue `r = 0..q`: fractional class and integer shift of `r l / q`.
    residues: Vec<(usize, [i64; 3])>,
}

/// One `(offset, line)` contribution restricted to its valid box of `i`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Term {
    pub w: f64,
    pub d: [i64; 3],
    /// Class and base offset (relative to `i`) of `u'`.
    pub c1: usize,
    pub o1: [i64; 3],
    /// Class and base offset of `v'`.
    pub c2: usize,
    pub o2: [i64; 3],
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

#[derive(Clone, Debug)]
pub struct QParts {
    pub gain: Vec<f64>,
    pub loss: Vec<f64>,
}

impl QParts {
    pub fn total(&self) -> Vec<f64> {
        self.gain.iter().zip(&self.loss).map(|(g, l)| g - l).collect()
    }
}

pub struct LatticeCollision {
    params: CollisionParams,
    lattice: VelocityLattice,
    lines: Vec<LineStencil>,
    pub(crate) classes: Vec<FracClass>,
    /// Per offset and line: radial cell integral times normalized angular weight.
    weights: Vec<f64>,
    /// Weight of the self cell `d = 0`, where `u' = v' = v`.
    pub(crate) self_weight: f64,
    pub(crate) mu: Vec<f64>,
    pub(crate) sqrt_mu: Vec<f64>,
    nu_lattice: OnceLock<Vec<f64>>,
    /// Collision invariants `1, v, |v|^2` at every node.
    pub(crate) invariants: Vec<[f64; 5]>,
}

fn frac_key(f: [f64; 3]) -> [i64; 3] {
    f.map(|c| (c * 1e9).round() as i64)
}

impl LatticeCollision {
    pub fn new(params: &CollisionParams) -> Result<Self> {
        params.validate()?;
        let lattice = params.lattice;
        let n = lattice.n as i64;
        let h = lattice.spacing();
        let gamma = params.gamma;
        let eps = params.epsilon;
        let rule = SphereRule::lebedev(params.sphere_order)?;
        let sphere_lines = rule.lines();

        let mut classes: Vec<FracClass> = Vec::new();
        let mut keys: Vec<[i64; 3]> = Vec::new();
        let mut lines = Vec::new();
        for line in &sphere_lines {
            let q = line.dir.iter().map(|c| c * c).sum::<i64>();
            let mut residues = Vec::new();
            for r in 0..q {
                let mut shift = [0i64; 3];
                let mut frac = [0.0; 3];
                for k in 0..3 {
                    let num = r * line.dir[k];
                    shift[k] = num.div_euclid(q);
                    frac[k] = num.rem_euclid(q) as f64 / q as f64;
                }
                let key = frac_key(frac);
                let idx = match keys.iter().position(|k| *k == key) {
                    Some(i) => i,
                    None => {
                        let up = frac.map(|c| c > 0.0);
                        let mut corners = Vec::new();
                        for corner in 0..8usize {
                            let mut w = 1.0;
                            let mut off = [0usize; 3];
                            for k in 0..3 {
                                let bit = (corner >> k) & 1;
                                off[k] = bit;
                                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                            }
                            if w > 0.0 {
                                corners.push((off, w));
                            }
                        }
                        keys.push(key);
                        classes.push(FracClass { up, corners });
                        classes.len() - 1
                    }
                };
                residues.push((idx, shift));
            }
            lines.push(LineStencil { dir: line.dir, q, residues });
        }

        let span = 2 * n - 1;
        let nl = sphere_lines.len();
        let (gx, gw) = quadrature::gauss_legendre(8);
        let cell_integral = |d: [i64; 3]| -> f64 {
            let far = d.iter().map(|c| c.abs()).max().unwrap() > 3;
            if far {
                let r = h * ((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64).sqrt();
                return h * h * h * r.powf(gamma) * chi(r, eps);
            }
            let mut acc = 0.0;
            for (a, wa) in gx.iter().zip(&gw) {
                for (b, wb) in gx.iter().zip(&gw) {
                    for (c, wc) in gx.iter().zip(&gw) {
                        let w = [
                            h * (d[0] as f64 + 0.5 * a),
                            h * (d[1] as f64 + 0.5 * b),
                            h * (d[2] as f64 + 0.5 * c),
                        ];
                        let r = crate::vec3::norm(w);
                        acc += wa * wb * wc * r.powf(gamma) * chi(r, eps);
                    }
                }
            }
            acc * (0.5 * h).powi(3)
        };
        let mut weights = vec![0.0; (span * span * span) as usize * nl];
        weights.par_chunks_mut(nl).enumerate().for_each(|(di, slot)| {
            let di = di as i64;
            let d = [di / (span * span) - (n - 1), (di / span) % span - (n - 1), di % span - (n - 1)];
            if d == [0, 0, 0] {
                return;
            }
            let dn = ((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64).sqrt();
            let mut total = 0.0;
            for (l, line) in sphere_lines.iter().enumerate() {
                let c = (d[0] as f64 * line.omega[0] + d[1] as f64 * line.omega[1] + d[2] as f64 * line.omega[2]) / dn;
                slot[l] = line.weight * c.abs();
                total += slot[l];
            }
            let radial = cell_integral(d);
            for s in slot.iter_mut() {
                *s *= 2.0 * PI * radial / total;
            }
        });

        let self_weight = 2.0 * PI * self_cell_integral(h, gamma, eps);
        let mu = lattice.sample(maxwellian);
        let sqrt_mu = lattice.sample(sqrt_maxwellian);
        let invariants = lattice.nodes().iter().map(|v| [1.0, v[0], v[1], v[2], crate::vec3::norm2(*v)]).collect();
        Ok(Self {
            params: *params,
            lattice,
            lines,
            classes,
            weights,
            self_weight,
            mu,
            sqrt_mu,
            nu_lattice: OnceLock::new(),
            invariants,
        })
    }

    pub fn params(&self) -> &CollisionParams {
        &self.params
    }

    pub fn lattice(&self) -> &VelocityLattice {
        &self.lattice
    }

    pub fn maxwellian(&self) -> &[f64] {
        &self.mu
    }

    pub fn sqrt_maxwellian(&self) -> &[f64] {
        &self.sqrt_mu
    }

    fn span(&self) -> i64 {
        2 * self.lattice.n as i64 - 1
    }

    pub(crate) fn offset_count(&self) -> usize {
        (self.span() * self.span() * self.span()) as usize
    }

    pub(crate) fn offset(&self, di: usize) -> [i64; 3] {
        let s = self.span();
        let n = self.lattice.n as i64;
        let di = di as i64;
        [di / (s * s) - (n - 1), (di / s) % s - (n - 1), di % s - (n - 1)]
    }

    pub(crate) fn line_count(&self) -> usize {
        self.lines.len()
    }

    /// The `(d, l)` term, or `None` when it has no weight or empty box.
    pub(crate) fn term(&self, di: usize, l: usize) -> Option<Term> {
        let w = self.weights[di * self.lines.len() + l];
        if w == 0.0 {
            return None;
        }
        let d = self.offset(di);
        let line = &self.lines[l];
        let m = d[0] * line.dir[0] + d[1] * line.dir[1] + d[2] * line.dir[2];
        let big_q = m.div_euclid(line.q);
        let r = m.rem_euclid(line.q);
        let (c2, s2) = line.residues[r as usize];
        let o2 = [0, 1, 2].map(|k| big_q * line.dir[k] + s2[k]);
        let (c1, o1) = if r == 0 {
            (c2, [0, 1, 2].map(|k| d[k] - big_q * line.dir[k]))
        } else {
            let (c, s) = line.residues[(line.q - r) as usize];
            (c, [0, 1, 2].map(|k| d[k] - (big_q + 1) * line.dir[k] + s[k]))
        };
        let n = self.lattice.n as i64;
        let up1 = self.classes[c1].up;
        let up2 = self.classes[c2].up;
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for k in 0..3 {
            let a = 0i64.max(-d[k]).max(-o1[k]).max(-o2[k]);
            let b = n.min(n - d[k]).min(n - i64::from(up1[k]) - o1[k]).min(n - i64::from(up2[k]) - o2[k]);
            if b <= a {
                return None;
            }
            lo[k] = a as usize;
            hi[k] = b as usize;
        }
        Some(Term { w, d, c1, o1, c2, o2, lo, hi })
    }

    #[inline]
    pub(crate) fn flat_offset(&self, o: [i64; 3]) -> i64 {
        let n = self.lattice.n as i64;
        (o[0] * n + o[1]) * n + o[2]
    }

    /// `p` interpolated at every fractional class offset.
    pub(crate) fn class_fields(&self, p: &[f64]) -> Vec<Vec<f64>> {
        let lat = self.lattice;
        let n = lat.n;
        self.classes
            .par_iter()
            .map(|class| {
                let mut g = vec![0.0; lat.len()];
                let lim = class.up.map(|u| n - usize::from(u));
                for ix in 0..lim[0] {
                    for iy in 0..lim[1] {
                        for iz in 0..lim[2] {
                            let mut acc = 0.0;
                            for (off, w) in &class.corners {
                                acc += w * p[lat.flat(ix + off[0], iy + off[1], iz + off[2])];
                            }
                            g[lat.flat(ix, iy, iz)] = acc;
                        }
                    }
                }
                g
            })
            .collect()
    }

    fn for_each_term_parallel<F>(&self, body: F) -> Vec<f64>
    where
        F: Fn(&Term, &mut [f64]) + Sync,
    {
        self.for_each_term_parallel_wide(1, body)
    }

    /// As [`Self::for_each_term_parallel`] with `width` stacked accumulators.
    fn for_each_term_parallel_wide<F>(&self, width: usize, body: F) -> Vec<f64>
    where
        F: Fn(&Term, &mut [f64]) + Sync,
    {
        let len = width * self.lattice.len();
        let nl = self.lines.len();
        (0..self.offset_count())
            .into_par_iter()
            .with_min_len(64)
            .fold(
                || vec![0.0; len],
                |mut acc, di| {
                    for l in 0..nl {
                        if let Some(t) = self.term(di, l) {
                            body(&t, &mut acc);
                        }
                    }
                    acc
                },
            )
            .reduce(
                || vec![0.0; len],
                |mut a, b| {
                    a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                    a
                },
            )
    }

    /// `sum W mu(u) I(p1)(u') I(p2)(v')`, including the self cell.
    pub fn gain_sum(&self, p1: &[f64], p2: &[f64]) -> Vec<f64> {
        let g1 = self.class_fields(p1);
        let g2_owned;
        let g2 = if std::ptr::eq(p1, p2) || p1 == p2 {
            &g1
        } else {
            g2_owned = self.class_fields(p2);
            &g2_owned
        };
        let mu = &self.mu;
        let mut out = self.for_each_term_parallel(|t, acc| {
            let (a, b) = (&g1[t.c1], &g2[t.c2]);
            self.sweep(t, acc, |acc, base| {
                let bm = (base + self.flat_offset(t.d)) as usize;
                let b1 = (base + self.flat_offset(t.o1)) as usize;
                let b2 = (base + self.flat_offset(t.o2)) as usize;
                let len = acc.len();
                for (((o, m), x), y) in acc.iter_mut().zip(&mu[bm..bm + len]).zip(&a[b1..b1 + len]).zip(&b[b2..b2 + len]) {
                    *o += t.w * m * x * y;
                }
            });
        });
        for i in 0..out.len() {
            out[i] += self.self_weight * mu[i] * p1[i] * p2[i];
        }
        out
    }

    /// `gain_sum(p1, p2)` and `loss_sum(p1)` in one sweep over the terms.
    pub fn gain_loss_sum(&self, p1: &[f64], p2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let g1 = self.class_fields(p1);
        let g2_owned;
        let g2 = if std::ptr::eq(p1, p2) || p1 == p2 {
            &g1
        } else {
            g2_owned = self.class_fields(p2);
            &g2_owned
        };
        let mu = &self.mu;
        let mp: Vec<f64> = mu.iter().zip(p1).map(|(m, x)| m * x).collect();
        let n = self.lattice.len();
        let mut out = self.for_each_term_parallel_wide(2, |t, acc| {
            let (a, b) = (&g1[t.c1], &g2[t.c2]);
            let (gain, loss) = acc.split_at_mut(n);
            let (dm, d1, d2) = (self.flat_offset(t.d), self.flat_offset(t.o1), self.flat_offset(t.o2));
            for ix in t.lo[0]..t.hi[0] {
                for iy in t.lo[1]..t.hi[1] {
                    let start = self.lattice.flat(ix, iy, t.lo[2]);
                    let len = t.hi[2] - t.lo[2];
                    let base = start as i64;
                    let (bm, b1, b2) = ((base + dm) as usize, (base + d1) as usize, (base + d2) as usize);
                    let (m, x, y, q) = (&mu[bm..bm + len], &a[b1..b1 + len], &b[b2..b2 + len], &mp[bm..bm + len]);
                    let (go, lo) = (&mut gain[start..start + len], &mut loss[start..start + len]);
                    for i in 0..len {
                        go[i] += t.w * m[i] * x[i] * y[i];
                        lo[i] += t.w * q[i];
                    }
                }
            }
        });
        let loss = out.split_off(n);
        let mut gain = out;
        for i in 0..n {
            gain[i] += self.self_weight * mu[i] * p1[i] * p2[i];
        }
        let loss = loss.iter().zip(&mp).map(|(l, m)| l + self.self_weight * m).collect();
        (gain, loss)
    }

    /// `sum W mu(u) p(u)` over the same terms as the gain.
    pub fn loss_sum(&self, p: &[f64]) -> Vec<f64> {
        let mp: Vec<f64> = self.mu.iter().zip(p).map(|(m, x)| m * x).collect();
        let mut out = self.for_each_term_parallel(|t, acc| {
            self.sweep(t, acc, |acc, base| {
                let bm = (base + self.flat_offset(t.d)) as usize;
                let len = acc.len();
                for (o, m) in acc.iter_mut().zip(&mp[bm..bm + len]) {
                    *o += t.w * m;
                }
            });
        });
        for i in 0..out.len() {
            out[i] += self.self_weight * mp[i];
        }
        out
    }

    /// Calls `row` with each contiguous z-run of the term's box.
    #[inline]
    fn sweep(&self, t: &Term, acc: &mut [f64], mut row: impl FnMut(&mut [f64], i64)) {
        for ix in t.lo[0]..t.hi[0] {
            for iy in t.lo[1]..t.hi[1] {
                let start = self.lattice.flat(ix, iy, t.lo[2]);
                let len = t.hi[2] - t.lo[2];
                row(&mut acc[start..start + len], start as i64);
            }
        }
    }

    /// Lattice collision frequency `nu(mu)`, consistent with the gain terms.
    pub fn nu_lattice(&self) -> &[f64] {
        self.nu_lattice.get_or_init(|| self.loss_sum(&vec![1.0; self.lattice.len()]))
    }

    /// `nu(F)(v) = int |u-v|^gamma b0 F(u)`.
    pub fn nu_of(&self, big_f: &[f64]) -> Result<Vec<f64>> {
        self.lattice.check(big_f)?;
        let p: Vec<f64> = big_f.iter().zip(&self.mu).map(|(f, m)| f / m).collect();
        Ok(self.loss_sum(&p))
    }

    /// Sums `sum_i x_i phi_k(v_i)` of the first `count` invariants.
    pub(crate) fn moments(&self, x: &[f64], count: usize) -> [f64; 5] {
        let mut m = [0.0; 5];
        for (xi, phi) in x.iter().zip(&self.invariants) {
            for k in 0..count {
                m[k] += xi * phi[k];
            }
        }
        m
    }

    /// Inverse Gram matrix `(sum_i d_i phi phi^T)^-1` of the first `count`
    /// invariants, `None` when singular.
    pub(crate) fn inverse_gram(&self, d: &[f64], count: usize) -> Option<nalgebra::DMatrix<f64>> {
        let mut g = nalgebra::DMatrix::<f64>::zeros(count, count);
        for (di, phi) in d.iter().zip(&self.invariants) {
            for a in 0..count {
                for b in 0..count {
                    g[(a, b)] += di * phi[a] * phi[b];
                }
            }
        }
        g.try_inverse().filter(|inv| inv.iter().all(|x| x.is_finite()))
    }

    /// Replaces `x` by `x - d sum_k lambda_k phi_k` so that its first `count`
    /// moments equal `target`. Left unchanged when the weights are degenerate.
    pub(crate) fn match_moments(&self, x: &mut [f64], d: &[f64], target: [f64; 5], count: usize) {
        let Some(inv) = self.inverse_gram(d, count) else { return };
        let m = self.moments(x, count);
        let rhs = nalgebra::DVector::from_iterator(count, (0..count).map(|k| m[k] - target[k]));
        let lambda = inv * rhs;
        for ((xi, di), phi) in x.iter_mut().zip(d).zip(&self.invariants) {
            let s: f64 = (0..count).map(|k| lambda[k] * phi[k]).sum();
            *xi -= di * s;
        }
    }

    /// Weight of the correction applied to the perturbative operators.
    pub(crate) fn correction_weight(&self) -> Vec<f64> {
        self.mu.iter().zip(self.nu_lattice()).map(|(m, n)| m * n).collect()
    }

    /// `Q(F1, F2)` from raw interpolation, without the conservative correction.
    pub fn q_parts_uncorrected(&self, f1: &[f64], f2: &[f64]) -> Result<QParts> {
        self.lattice.check(f1)?;
        self.lattice.check(f2)?;
        let p1: Vec<f64> = f1.iter().zip(&self.mu).map(|(f, m)| f / m).collect();
        let p2: Vec<f64> = f2.iter().zip(&self.mu).map(|(f, m)| f / m).collect();
        let (g, l) = self.gain_loss_sum(&p1, &p2);
        Ok(QParts {
            gain: g.iter().zip(&self.mu).map(|(g, m)| g * m).collect(),
            loss: l.iter().zip(f2).map(|(l, f)| l * f).collect(),
        })
    }

    /// Absolute-form `Q(F1, F2)` with gain and loss kept apart.
    pub fn q_parts(&self, f1: &[f64], f2: &[f64]) -> Result<QParts> {
        let mut parts = self.q_parts_uncorrected(f1, f2)?;
        self.conserve(&mut parts, f1 == f2);
        Ok(parts)
    }

    /// Conservative correction of an absolute-form `Q`: the gain is rescaled by
    /// `1 - lambda . phi(v)`, matching its invariant moments to the loss (mass
    /// only unless `symmetric`). Nonnegative gains stay nonnegative unless the
    /// raw defect is large.
    pub fn conserve(&self, parts: &mut QParts, symmetric: bool) {
        let count = if symmetric { 5 } else { 1 };
        let target = self.moments(&parts.loss, count);
        let d: Vec<f64> = parts.gain.iter().map(|g| g.abs()).collect();
        self.match_moments(&mut parts.gain, &d, target, count);
    }

    /// Corrected `Q_gain(F, F)` together with the loss frequency `nu(F)`.
    pub fn gain_and_frequency(&self, big_f: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.lattice.check(big_f)?;
        let p: Vec<f64> = big_f.iter().zip(&self.mu).map(|(f, m)| f / m).collect();
        let (g, nu) = self.gain_loss_sum(&p, &p);
        let mut parts = QParts {
            gain: g.iter().zip(&self.mu).map(|(g, m)| g * m).collect(),
            loss: nu.iter().zip(big_f).map(|(n, f)| n * f).collect(),
        };
        self.conserve(&mut parts, true);
        Ok((parts.gain, nu))
    }

    pub fn q_full(&self, f1: &[f64], f2: &[f64]) -> Result<Vec<f64>> {
        Ok(self.q_parts(f1, f2)?.total())
    }

    /// `Gamma(f1, f2) = Q(sqrt_mu f1, sqrt_mu f2) / sqrt_mu`, gain and loss apart.
    pub fn gamma_parts(&self, f1: &[f64], f2: &[f64]) -> Result<QParts> {
        self.lattice.check(f1)?;
        self.lattice.check(f2)?;
        let p1: Vec<f64> = f1.iter().zip(&self.sqrt_mu).map(|(f, s)| f / s).collect();
        let p2: Vec<f64> = f2.iter().zip(&self.sqrt_mu).map(|(f, s)| f / s).collect();
        let (g, l) = self.gain_loss_sum(&p1, &p2);
        // Correct in absolute form, then return to the sqrt_mu scaling.
        let mut gain: Vec<f64> = g.iter().zip(&self.mu).map(|(g, m)| g * m).collect();
        let loss_abs: Vec<f64> = l.iter().zip(f2).zip(&self.sqrt_mu).map(|((l, f), s)| l * f * s).collect();
        let count = if f1 == f2 { 5 } else { 1 };
        let target = self.moments(&loss_abs, count);
        self.match_moments(&mut gain, &self.correction_weight(), target, count);
        Ok(QParts {
            gain: gain.iter().zip(&self.sqrt_mu).map(|(g, s)| g / s).collect(),
            loss: l.iter().zip(f2).map(|(l, f)| l * f).collect(),
        })
    }

    pub fn apply_gamma(&self, f1: &[f64], f2: &[f64]) -> Result<Vec<f64>> {
        Ok(self.gamma_parts(f1, f2)?.total())
    }

    /// Raw `K f` without the conservative correction.
    pub(crate) fn apply_k_uncorrected(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.lattice.check(f)?;
        let p: Vec<f64> = f.iter().zip(&self.sqrt_mu).map(|(f, s)| f / s).collect();
        let ones = vec![1.0; p.len()];
        let a = self.gain_sum(&p, &ones);
        let b = self.gain_sum(&ones, &p);
        let c = self.loss_sum(&p);
        Ok((0..p.len()).map(|i| self.sqrt_mu[i] * (a[i] + b[i] - c[i])).collect())
    }

    /// `K f = K2 f - K1 f` evaluated term by term (no table), corrected so
    /// that `sqrt_mu L f` has vanishing invariant moments.
    pub fn apply_k_direct(&self, f: &[f64]) -> Result<Vec<f64>> {
        let k = self.apply_k_uncorrected(f)?;
        let nu = self.nu_lattice();
        let mut abs: Vec<f64> = k.iter().zip(&self.sqrt_mu).map(|(k, s)| k * s).collect();
        let free: Vec<f64> = (0..f.len()).map(|i| self.sqrt_mu[i] * nu[i] * f[i]).collect();
        let target = self.moments(&free, 5);
        self.match_moments(&mut abs, &self.correction_weight(), target, 5);
        Ok(abs.iter().zip(&self.sqrt_mu).map(|(a, s)| a / s).collect())
    }

    /// Linearized operator `L f = nu f - K f`.
    pub fn apply_l(&self, f: &[f64]) -> Result<Vec<f64>> {
        let k = self.apply_k_direct(f)?;
        let nu = self.nu_lattice();
        Ok((0..f.len()).map(|i| nu[i] * f[i] - k[i]).collect())
    }
}

/// `int_cell |w|^gamma chi(|w|) dw` over the cube of side `h` centered at 0.
fn self_cell_integral(h: f64, gamma: f64, eps: f64) -> f64 {
    let a = 0.5 * h;
    if 2.0 * eps <= a {
        // Six pyramids with apex at the origin, minus the cut ball.
        let face = quadrature::integrate(
            |y| quadrature::integrate(|z| (a * a + y * y + z * z).powf(0.5 * gamma), -a, a, 16, 2),
            -a,
            a,
            16,
            2,
        );
        let full = 6.0 * a / (gamma + 3.0) * face;
        full - 4.0 * PI * one_minus_chi_moment(gamma, eps)
    } else {
        let (gx, gw) = quadrature::gauss_legendre(12);
        let mut acc = 0.0;
        for sub in 0..8 {
            let shift = [0, 1, 2].map(|k| if (sub >> k) & 1 == 1 { 0.5 * a } else { -0.5 * a });
            for (x, wx) in gx.iter().zip(&gw) {
                for (y, wy) in gx.iter().zip(&gw) {
                    for (z, wz) in gx.iter().zip(&gw) {
                        let w = [shift[0] + 0.5 * a * x, shift[1] + 0.5 * a * y, shift[2] + 0.5 * a * z];
                        let r = crate::vec3::norm(w);
                        acc += wx * wy * wz * r.powf(gamma) * chi(r, eps);
                    }
                }
            }
        }
        acc * (0.5 * a).powi(3)
    }
}

/// `int_0^{2 eps} r^{gamma+2} (1 - chi(r)) dr`.
pub(crate) fn one_minus_chi_moment(gamma: f64, eps: f64) -> f64 {
    let inner = quadrature::integrate_power_weighted(|_| 1.0, gamma + 2.0, eps, 16, 4);
    let ramp = quadrature::integrate(|r| r.powf(gamma + 2.0) * (1.0 - chi_tilde((r - eps) / eps)), eps, 2.0 * eps, 16, 16);
    inner + ramp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::collision_frequency;
    use rand::{Rng, SeedableRng};

    fn op(n: usize, order: usize) -> LatticeCollision {
        let lat = VelocityLattice::new(n, 6.0).unwrap();
        LatticeCollision::new(&CollisionParams::new(-1.0, 0.01, order, lat).unwrap()).unwrap()
    }

    #[test]
    fn self_cell_matches_brute_force() {
        let (h, gamma, eps) = (0.5, -1.0, 0.01);
        let fast = self_cell_integral(h, gamma, eps);
        // Midpoint rule on a fine grid avoiding the origin.
        let m = 120;
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let w = [i, j, k].map(|c| -0.5 * h + (c as f64 + 0.5) * h / m as f64);
                    let r = crate::vec3::norm(w);
                    acc += r.powf(gamma) * chi(r, eps);
                }
            }
        }
        acc *= (h / m as f64).powi(3);
        assert!((fast - acc).abs() < 2e-3 * fast, "{fast} vs {acc}");
    }

    #[test]
    fn maxwellian_is_annihilated() {
        let c = op(12, 26);
        let q = c.q_full(c.maxwellian(), c.maxwellian()).unwrap();
        let max = q.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(max < 1e-12, "{max}");
        let g = c.apply_gamma(c.sqrt_maxwellian(), c.sqrt_maxwellian()).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-12));
        let l = c.apply_l(c.sqrt_maxwellian()).unwrap();
        assert!(l.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn zero_inputs() {
        let c = op(8, 26);
        let z = vec![0.0; c.lattice().len()];
        assert!(c.apply_gamma(&z, &z).unwrap().iter().all(|x| *x == 0.0));
        assert!(c.apply_k_direct(&z).unwrap().iter().all(|x| *x == 0.0));
        assert!(matches!(c.apply_k_direct(&[0.0; 3]), Err(crate::Error::LatticeMismatch { .. })));
    }

    #[test]
    fn lattice_frequency_tracks_analytic() {
        let c = op(24, 26);
        let nu = c.nu_lattice();
        let lat = c.lattice();
        for &v in &[[0.0, 0.0, 0.0], [1.0, 0.5, -0.25], [2.25, 0.25, 0.25]] {
            let idx = (0..lat.len()).min_by(|&a, &b| {
                let da = crate::vec3::norm(crate::vec3::sub(lat.node(a), v));
                let db = crate::vec3::norm(crate::vec3::sub(lat.node(b), v));
                da.total_cmp(&db)
            });
            let i = idx.unwrap();
            let exact = collision_frequency(lat.node(i), -1.0);
            assert!((nu[i] - exact).abs() < 0.02 * exact, "{} vs {}", nu[i], exact);
        }
    }

    #[test]
    fn axis_lines_conserve_exactly() {
        let c = op(10, 6);
        let lat = *c.lattice();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let f: Vec<f64> = c.maxwellian().iter().map(|m| m * (1.0 + 0.3 * rng.gen_range(-1.0..1.0))).collect();
        let q = c.q_full(&f, &f).unwrap();
        let scale: f64 = q.iter().map(|x| x.abs()).sum();
        let mass: f64 = q.iter().sum();
        let mut mom = [0.0; 3];
        let mut energy = 0.0;
        for i in 0..lat.len() {
            let v = lat.node(i);
            for k in 0..3 {
                mom[k] += v[k] * q[i];
            }
            energy += crate::vec3::norm2(v) * q[i];
        }
        assert!(mass.abs() < 1e-12 * scale, "{mass}");
        assert!(mom.iter().all(|m| m.abs() < 1e-11 * scale), "{mom:?}");
        assert!(energy.abs() < 1e-10 * scale, "{energy}");
    }

    fn invariant_moments(c: &LatticeCollision, x: &[f64]) -> [f64; 5] {
        c.moments(x, 5)
    }

    #[test]
    fn corrected_operators_conserve_on_all_lines() {
        let c = op(10, 26);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let f: Vec<f64> = c.maxwellian().iter().map(|m| m * (1.0 + 0.5 * rng.gen_range(-1.0..1.0))).collect();
        let raw = c.q_parts_uncorrected(&f, &f).unwrap().total();
        let q = c.q_full(&f, &f).unwrap();
        let scale: f64 = q.iter().map(|x| x.abs()).sum();
        let before = invariant_moments(&c, &raw);
        let after = invariant_moments(&c, &q);
        assert!(before.iter().any(|m| m.abs() > 1e-6 * scale));
        assert!(after.iter().all(|m| m.abs() < 1e-11 * scale), "{after:?}");

        let g: Vec<f64> = c.sqrt_maxwellian().iter().map(|s| s * rng.gen_range(-1.0..1.0)).collect();
        let sm = c.sqrt_maxwellian();
        let lf: Vec<f64> = c.apply_l(&g).unwrap().iter().zip(sm).map(|(x, s)| x * s).collect();
        let gf: Vec<f64> = c.apply_gamma(&g, &g).unwrap().iter().zip(sm).map(|(x, s)| x * s).collect();
        for v in [lf, gf] {
            let scale: f64 = v.iter().map(|x| x.abs()).sum();
            assert!(invariant_moments(&c, &v).iter().all(|m| m.abs() < 1e-11 * scale));
        }
    }

    #[test]
    fn corrected_gain_stays_nonnegative() {
        let c = op(10, 26);
        let lat = *c.lattice();
        let f = lat.sample(|v| (-crate::vec3::norm2(crate::vec3::sub(v, [0.8, -0.4, 0.2])) / 2.6).exp());
        let p = c.q_parts(&f, &f).unwrap();
        assert!(p.gain.iter().all(|g| *g >= 0.0));
    }
}
