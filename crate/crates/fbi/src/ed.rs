//! Exact diagonalisation of the projected interaction on tiny grids.
//!
//! Modes are ordered band-major, `mode = n * N_k + k`, and states are
//! occupation bitstrings with Jordan-Wigner signs taken in that order. The
//! Hamiltonian is stored as one- and two-body coefficients and applied on
//! the fly; particle-number sectors are diagonalised densely when small and
//! by Lanczos otherwise.

use crate::error::{FbiError, Result};
use crate::formfactor::FormFactorTable;
use crate::hf::Interaction;
use crate::lattice::CELL_AREA;
use crate::linalg::{eigh, eigvalsh, CMat};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const MAX_MODES: usize = 16;
/// Sectors up to this dimension are diagonalised densely.
pub const DENSE_LIMIT: usize = 1 << 12;

type Bits = u32;

/// Apply `f_b` to a basis state: `None` if empty, else the new state and sign.
fn annihilate(s: Bits, b: usize) -> Option<(Bits, f64)> {
    if s >> b & 1 == 0 {
        return None;
    }
    let sign = if (s & ((1 << b) - 1)).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
    Some((s & !(1 << b), sign))
}

fn create(s: Bits, a: usize) -> Option<(Bits, f64)> {
    if s >> a & 1 == 1 {
        return None;
    }
    let sign = if (s & ((1 << a) - 1)).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
    Some((s | 1 << a, sign))
}

/// `f_a^dagger f_b |s>`.
fn hop(s: Bits, a: usize, b: usize) -> Option<(Bits, f64)> {
    let (t, s1) = annihilate(s, b)?;
    let (u, s2) = create(t, a)?;
    Some((u, s1 * s2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockSpace {
    pub n_k: usize,
    /// Bands per momentum, `2M`.
    pub n_bands: usize,
}

impl FockSpace {
    pub fn new(n_k: usize, n_bands: usize) -> Result<Self> {
        let n = n_k * n_bands;
        if n > MAX_MODES {
            return Err(FbiError::InvalidInput(format!("{n} modes exceed the cap of {MAX_MODES}")));
        }
        Ok(FockSpace { n_k, n_bands })
    }

    pub fn n_modes(&self) -> usize {
        self.n_k * self.n_bands
    }

    pub fn dim(&self) -> usize {
        1 << self.n_modes()
    }

    pub fn mode(&self, band: usize, k: usize) -> usize {
        band * self.n_k + k
    }

    pub fn sector(&self, n_particles: usize) -> Vec<Bits> {
        (0..self.dim() as Bits).filter(|s| s.count_ones() as usize == n_particles).collect()
    }
}

/// `sum_ab R_ab f_a^dagger f_b + r0`.
#[derive(Clone, Debug)]
pub struct OneBody {
    pub r: CMat,
    pub r0: C64,
}

impl OneBody {
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let n = self.r.nrows();
        let mut out: Vec<C64> = v.iter().map(|&x| x * self.r0).collect();
        for (s, &x) in v.iter().enumerate() {
            if x == C64::new(0.0, 0.0) {
                continue;
            }
            for a in 0..n {
                for b in 0..n {
                    let c = self.r[(a, b)];
                    if c == C64::new(0.0, 0.0) {
                        continue;
                    }
                    if let Some((t, sg)) = hop(s as Bits, a, b) {
                        out[t as usize] += c * x * sg;
                    }
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> OneBody {
        OneBody { r: self.r.adjoint(), r0: self.r0.conj() }
    }
}

/// Density operator `rho(q + G)` for grid index `q` and shell vector `g`.
pub fn build_rho(t: &FormFactorTable, space: &FockSpace, q: usize, g: [i32; 2]) -> Result<OneBody> {
    let n = space.n_modes();
    let mut r = CMat::zeros(n, n);
    let mut r0 = C64::new(0.0, 0.0);
    for k in 0..t.n_k() {
        let (kq, _) = t.grid.add_idx(k, q);
        let l = t
            .get(k, q, g)
            .ok_or_else(|| FbiError::InvalidInput(format!("q' = ({q}, {g:?}) outside the stored shell")))?;
        for m in 0..space.n_bands {
            for nn in 0..space.n_bands {
                r[(space.mode(m, k), space.mode(nn, kq))] += l[(m, nn)];
            }
            if q == 0 {
                r0 -= 0.5 * l[(m, m)];
            }
        }
    }
    Ok(OneBody { r, r0 })
}

/// Every stored `q' = q + G`, with its interaction weight and `rho(q')`.
pub fn all_rhos(t: &FormFactorTable, int: &Interaction, space: &FockSpace) -> Result<Vec<(usize, [i32; 2], f64, OneBody)>> {
    let mut out = Vec::new();
    for q in 0..t.n_k() {
        for (slot, &g) in t.shells[q].iter().enumerate() {
            out.push((q, g, int.v(t.momentum(q, slot)), build_rho(t, space, q, g)?));
        }
    }
    Ok(out)
}

/// `H = 1/(N_k |Omega|) sum_q' V(q') rho(q') rho(q')^dagger`, stored as
/// `sum T_abdc f_a^+ f_b f_d^+ f_c + sum h_ab f_a^+ f_b + e0`.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    pub space: FockSpace,
    two: Vec<(usize, usize, usize, usize, C64)>,
    one: Vec<(usize, usize, C64)>,
    pub e0: f64,
}

impl Hamiltonian {
    pub fn build(t: &FormFactorTable, int: &Interaction, space: FockSpace) -> Result<Self> {
        let n = space.n_modes();
        let pre = 1.0 / (t.n_k() as f64 * CELL_AREA);
        let mut two: HashMap<(usize, usize, usize, usize), C64> = HashMap::new();
        let mut one = CMat::zeros(n, n);
        let mut e0 = 0.0;
        for (_, _, v, rho) in all_rhos(t, int, &space)? {
            let w = pre * v;
            let nz: Vec<(usize, usize, C64)> = (0..n)
                .flat_map(|a| (0..n).map(move |b| (a, b)))
                .filter_map(|(a, b)| {
                    let c = rho.r[(a, b)];
                    (c.norm() > 1e-15).then_some((a, b, c))
                })
                .collect();
            for &(a, b, x) in &nz {
                for &(c, d, y) in &nz {
                    // R_ab conj(R_cd) f_a^+ f_b (f_c^+ f_d)^+ = ... f_d^+ f_c
                    *two.entry((a, b, d, c)).or_default() += x * y.conj() * w;
                }
                one[(a, b)] += x * rho.r0.conj() * w;
                one[(b, a)] += x.conj() * rho.r0 * w;
            }
            e0 += w * rho.r0.norm_sqr();
        }
        let two = two.into_iter().filter(|(_, c)| c.norm() > 1e-15).map(|((a, b, d, c), x)| (a, b, d, c, x)).collect();
        let one = (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .filter_map(|(a, b)| (one[(a, b)].norm() > 1e-15).then_some((a, b, one[(a, b)])))
            .collect();
        Ok(Hamiltonian { space, two, one, e0 })
    }

    fn row(&self, s: Bits, mut emit: impl FnMut(Bits, C64)) {
        for &(a, b, d, c, x) in &self.two {
            if let Some((t1, s1)) = hop(s, d, c) {
                if let Some((t2, s2)) = hop(t1, a, b) {
                    emit(t2, x * s1 * s2);
                }
            }
        }
        for &(a, b, x) in &self.one {
            if let Some((t, sg)) = hop(s, a, b) {
                emit(t, x * sg);
            }
        }
        emit(s, C64::new(self.e0, 0.0));
    }

    /// `H v` on the full Fock space.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        for (s, &x) in v.iter().enumerate() {
            if x.norm() == 0.0 {
                continue;
            }
            self.row(s as Bits, |t, c| out[t as usize] += c * x);
        }
        out
    }

    pub fn expectation(&self, v: &[C64]) -> f64 {
        let hv = self.apply(v);
        let num: C64 = v.iter().zip(&hv).map(|(a, b)| a.conj() * b).sum();
        num.re / v.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    /// Dense matrix of the `n_particles` sector and its basis.
    pub fn sector_matrix(&self, n_particles: usize) -> (Vec<Bits>, CMat) {
        let basis = self.space.sector(n_particles);
        let index: HashMap<Bits, usize> = basis.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let mut h = CMat::zeros(basis.len(), basis.len());
        for (j, &s) in basis.iter().enumerate() {
            self.row(s, |t, c| h[(index[&t], j)] += c);
        }
        (basis, h)
    }

    /// Lowest `n_eigs` eigenvalues of one particle-number sector.
    pub fn sector_spectrum(&self, n_particles: usize, n_eigs: usize) -> Result<Vec<f64>> {
        let basis = self.space.sector(n_particles);
        if basis.len() <= DENSE_LIMIT {
            let (_, h) = self.sector_matrix(n_particles);
            let mut e = eigvalsh(&h)?;
            e.truncate(n_eigs);
            return Ok(e);
        }
        let index: HashMap<Bits, usize> = basis.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let apply = |v: &[C64]| {
            let mut out = vec![C64::new(0.0, 0.0); v.len()];
            for (j, &s) in basis.iter().enumerate() {
                if v[j].norm() == 0.0 {
                    continue;
                }
                self.row(s, |t, c| out[index[&t]] += c * v[j]);
            }
            out
        };
        lanczos(basis.len(), apply, n_eigs, 200.min(basis.len()))
    }

    /// Maximum of `|H - H^dagger|` over a sector.
    pub fn hermiticity_residual(&self, n_particles: usize) -> f64 {
        let (_, h) = self.sector_matrix(n_particles);
        crate::linalg::max_abs(&(&h - h.adjoint()))
    }

    /// Lowest eigenvalue over every sector.
    pub fn ground_energy(&self) -> Result<f64> {
        let mut best = f64::INFINITY;
        for n in 0..=self.space.n_modes() {
            best = best.min(self.sector_spectrum(n, 1)?[0]);
        }
        Ok(best)
    }
}

/// Lanczos with full reorthogonalisation, deterministic start vector.
fn lanczos(n: usize, apply: impl Fn(&[C64]) -> Vec<C64>, n_eigs: usize, steps: usize) -> Result<Vec<f64>> {
    let mut q: Vec<Vec<C64>> = Vec::new();
    let mut v: Vec<C64> = (0..n).map(|i| C64::new(1.0 + (i % 5) as f64 * 0.1, (i % 3) as f64 * 0.05)).collect();
    let nv = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|z| *z /= nv);
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for _ in 0..steps {
        let mut w = apply(&v);
        let a: C64 = v.iter().zip(&w).map(|(x, y)| x.conj() * y).sum();
        alpha.push(a.re);
        q.push(v.clone());
        for b in &q {
            let p: C64 = b.iter().zip(&w).map(|(x, y)| x.conj() * y).sum();
            w.iter_mut().zip(b).for_each(|(y, x)| *y -= p * x);
        }
        let nb = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nb < 1e-12 {
            break;
        }
        beta.push(nb);
        v = w.into_iter().map(|z| z / nb).collect();
    }
    let m = alpha.len();
    let t = CMat::from_fn(m, m, |i, j| {
        if i == j {
            C64::new(alpha[i], 0.0)
        } else if i + 1 == j || j + 1 == i {
            C64::new(beta[i.min(j)], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let mut e = eigvalsh(&t)?;
    e.truncate(n_eigs);
    Ok(e)
}

/// Vacuum vector of the full Fock space.
pub fn vacuum(space: &FockSpace) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); space.dim()];
    v[0] = C64::new(1.0, 0.0);
    v
}

/// `sum_a c_a f_a^dagger v`.
pub fn apply_creation(v: &[C64], coeffs: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); v.len()];
    for (s, &x) in v.iter().enumerate() {
        if x.norm() == 0.0 {
            continue;
        }
        for (a, &c) in coeffs.iter().enumerate() {
            if c.norm() == 0.0 {
                continue;
            }
            if let Some((t, sg)) = create(s as Bits, a) {
                out[t as usize] += c * x * sg;
            }
        }
    }
    out
}

/// `sum_a conj(c_a) f_a v`.
pub fn apply_annihilation(v: &[C64], coeffs: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); v.len()];
    for (s, &x) in v.iter().enumerate() {
        if x.norm() == 0.0 {
            continue;
        }
        for (a, &c) in coeffs.iter().enumerate() {
            if c.norm() == 0.0 {
                continue;
            }
            if let Some((t, sg)) = annihilate(s as Bits, a) {
                out[t as usize] += c.conj() * x * sg;
            }
        }
    }
    out
}

/// Translation-invariant Slater determinant filling the range of `P(k)`.
pub fn slater_state(space: &FockSpace, p: &[CMat]) -> Result<Vec<C64>> {
    let mut v = vacuum(space);
    for (k, pk) in p.iter().enumerate() {
        let (vals, vecs) = eigh(pk)?;
        for (i, &l) in vals.iter().enumerate() {
            if l < 0.5 {
                continue;
            }
            let mut coeffs = vec![C64::new(0.0, 0.0); space.n_modes()];
            for n in 0..space.n_bands {
                coeffs[space.mode(n, k)] = vecs[(n, i)];
            }
            v = apply_creation(&v, &coeffs);
        }
    }
    let nv = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if nv < 1e-12 {
        return Err(FbiError::Numerical("empty Slater determinant".into()));
    }
    Ok(v.into_iter().map(|z| z / nv).collect())
}

/// Ferromagnetic determinant filling bands `0..M` (`sign > 0`) or `M..2M`.
pub fn fsd_state(space: &FockSpace, sign: i32) -> Vec<C64> {
    let m = space.n_bands / 2;
    let bands = if sign > 0 { 0..m } else { m..2 * m };
    let mut s: Bits = 0;
    for n in bands {
        for k in 0..space.n_k {
            s |= 1 << space.mode(n, k);
        }
    }
    let mut v = vec![C64::new(0.0, 0.0); space.dim()];
    v[s as usize] = C64::new(1.0, 0.0);
    v
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Largest `||rho(q') Psi||^2` over every stored `q'`.
pub fn frustration(rhos: &[(usize, [i32; 2], f64, OneBody)], psi: &[C64]) -> f64 {
    rhos.iter().map(|(_, _, _, r)| norm_sqr(&r.apply(psi))).fold(0.0, f64::max)
}

/// Add (`add = true`) or remove one electron from `FSD(sign)` with
/// coefficients `c[k][l]` on the empty (resp. filled) bands, and return the
/// energy of the normalised excited state.
pub fn excitation_energy(h: &Hamiltonian, sign: i32, add: bool, c: &[Vec<C64>]) -> Result<f64> {
    let space = h.space;
    let m = space.n_bands / 2;
    let psi = fsd_state(&space, sign);
    let first = if (sign > 0) != add { 0 } else { m };
    let mut coeffs = vec![C64::new(0.0, 0.0); space.n_modes()];
    for (k, ck) in c.iter().enumerate() {
        for (l, &x) in ck.iter().enumerate() {
            coeffs[space.mode(first + l, k)] = x;
        }
    }
    let v = if add { apply_creation(&psi, &coeffs) } else { apply_annihilation(&psi, &coeffs) };
    if norm_sqr(&v) < 1e-14 {
        return Err(FbiError::InvalidInput("excitation annihilates the state".into()));
    }
    Ok(h.expectation(&v))
}

/// One row of the sector spectrum dump.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub sector: usize,
    pub index: usize,
    pub energy: f64,
}

pub fn spectrum_csv(rows: &[SpectrumRow]) -> String {
    let mut s = String::from("sector,index,energy\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.sector, r.index, crate::io::fmt(r.energy)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anticommutation() {
        // {f_a, f_b^+} = delta_ab on every basis state of 4 modes
        for s in 0..16u32 {
            for a in 0..4 {
                for b in 0..4 {
                    let mut acc: HashMap<Bits, f64> = HashMap::new();
                    if let Some((t, s1)) = create(s, b) {
                        if let Some((u, s2)) = annihilate(t, a) {
                            *acc.entry(u).or_default() += s1 * s2;
                        }
                    }
                    if let Some((t, s1)) = annihilate(s, a) {
                        if let Some((u, s2)) = create(t, b) {
                            *acc.entry(u).or_default() += s1 * s2;
                        }
                    }
                    acc.retain(|_, v| *v != 0.0);
                    if a == b {
                        assert_eq!(acc.len(), 1);
                        assert_eq!(acc[&s], 1.0);
                    } else {
                        assert!(acc.is_empty());
                    }
                }
            }
        }
    }

    #[test]
    fn mode_cap() {
        assert!(FockSpace::new(9, 2).is_err());
        assert_eq!(FockSpace::new(4, 2).unwrap().dim(), 256);
    }
}
