//! Hartree-Fock energy of translation-invariant Slater determinants in the
//! flat-band interacting model.
//!
//! A state is described by projectors `P(k)` of rank `M` on the `2M` flat
//! bands, with `Q(k) = 2P(k) - I`.

use crate::error::{FbiError, Result};
use crate::formfactor::FormFactorTable;
use crate::lattice::{self, Vec2, CELL_AREA};
use crate::linalg::{eigh, svd, CMat};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Screened interaction `V(q) = (2 pi / eps) tanh(|q| d / 2) / |q|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub eps: f64,
    pub d: f64,
}

impl Default for Interaction {
    fn default() -> Self {
        Interaction { eps: 1.0, d: 1.0 }
    }
}

impl Interaction {
    pub fn v(&self, q: Vec2) -> f64 {
        let n = lattice::norm(q);
        if n < 1e-12 {
            PI * self.d / self.eps
        } else {
            2.0 * PI / self.eps * (0.5 * n * self.d).tanh() / n
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Energies {
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "K")]
    pub k: f64,
    /// `J + K - K[FSD]`, zero on the flat sublattice-polarised states.
    pub total: f64,
}

/// Sublattice-polarised determinant: `sign > 0` fills bands `1..M`.
pub fn fsd(n_k: usize, m: usize, sign: i32) -> Vec<CMat> {
    let mut p = CMat::zeros(2 * m, 2 * m);
    let off = if sign > 0 { 0 } else { m };
    for i in 0..m {
        p[(off + i, off + i)] = C64::new(1.0, 0.0);
    }
    vec![p; n_k]
}

pub fn q_of(p: &CMat) -> CMat {
    p * C64::new(2.0, 0.0) - CMat::identity(p.nrows(), p.ncols())
}

fn prefactor(t: &FormFactorTable) -> f64 {
    1.0 / (CELL_AREA * t.n_k() as f64)
}

/// `J = 1/(|Omega| N_k) sum_G V(G) |sum_k tr(Lambda_k(G) Q(k))|^2`.
pub fn hartree(t: &FormFactorTable, int: &Interaction, p: &[CMat]) -> f64 {
    let qs: Vec<CMat> = p.iter().map(q_of).collect();
    let mut e = 0.0;
    for (slot, _) in t.shells[0].iter().enumerate() {
        let s: C64 = (0..t.n_k()).map(|k| (t.get_slot(k, 0, slot) * &qs[k]).trace()).sum();
        e += int.v(t.momentum(0, slot)) * s.norm_sqr();
    }
    e * prefactor(t)
}

/// The Hartree term as the double sum over `k` and `k + q`, without
/// factoring the square.
pub fn hartree_double(t: &FormFactorTable, int: &Interaction, p: &[CMat]) -> f64 {
    let qs: Vec<CMat> = p.iter().map(q_of).collect();
    let mut e = C64::new(0.0, 0.0);
    for (slot, _) in t.shells[0].iter().enumerate() {
        let v = int.v(t.momentum(0, slot));
        for k in 0..t.n_k() {
            let a = (t.get_slot(k, 0, slot) * &qs[k]).trace();
            for q in 0..t.n_k() {
                let (kq, _) = t.grid.add_idx(k, q);
                let b = (t.get_slot(kq, 0, slot).adjoint() * &qs[kq]).trace();
                e += a * b * v;
            }
        }
    }
    e.re * prefactor(t)
}

/// `K = -1/(|Omega| N_k) sum_{k,q,G} V(q+G) tr(Lambda Q(k+q) Lambda^H Q(k))`.
pub fn fock(t: &FormFactorTable, int: &Interaction, p: &[CMat]) -> f64 {
    let qs: Vec<CMat> = p.iter().map(q_of).collect();
    let mut e = 0.0;
    for k in 0..t.n_k() {
        for q in 0..t.n_k() {
            let (kq, _) = t.grid.add_idx(k, q);
            for slot in 0..t.shells[q].len() {
                let l = t.get_slot(k, q, slot);
                let v = int.v(t.momentum(q, slot));
                e += v * (l * &qs[kq] * l.adjoint() * &qs[k]).trace().re;
            }
        }
    }
    -e * prefactor(t)
}

/// Fock energy through the CS angles of `P(k)`:
/// `-1/(2|Omega|N_k) sum V sum_ij |B1+B2|^2 cos(t_i - t'_j) + |B1-B2|^2 cos(t_i + t'_j)`
/// with `B1 = U1(k)^H A U1(k+q)`, `B2 = U2(k)^H conj(A) U2(k+q)`.
pub fn fock_cs(t: &FormFactorTable, int: &Interaction, p: &[CMat]) -> Result<f64> {
    let m = t.m;
    let cs: Vec<CsDecomposition> = p.iter().map(|x| cs_decompose(x, m)).collect::<Result<_>>()?;
    let mut e = 0.0;
    for k in 0..t.n_k() {
        for q in 0..t.n_k() {
            let (kq, _) = t.grid.add_idx(k, q);
            let (c1, c2) = (&cs[k], &cs[kq]);
            for slot in 0..t.shells[q].len() {
                let l = t.get_slot(k, q, slot);
                let a = l.view((0, 0), (m, m)).into_owned();
                let b1 = c1.u1.adjoint() * &a * &c2.u1;
                let b2 = c1.u2.adjoint() * a.map(|z| z.conj()) * &c2.u2;
                let mut s = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        let plus = (b1[(i, j)] + b2[(i, j)]).norm_sqr();
                        let minus = (b1[(i, j)] - b2[(i, j)]).norm_sqr();
                        s += plus * (c1.theta[i] - c2.theta[j]).cos() + minus * (c1.theta[i] + c2.theta[j]).cos();
                    }
                }
                e += int.v(t.momentum(q, slot)) * s;
            }
        }
    }
    Ok(-0.5 * e * prefactor(t))
}

pub fn energies(t: &FormFactorTable, int: &Interaction, p: &[CMat]) -> Energies {
    let j = hartree(t, int, p);
    let k = fock(t, int, p);
    let k0 = fock(t, int, &fsd(t.n_k(), t.m, 1));
    Energies { j, k, total: j + k - k0 }
}

/// Energy of adding (`add = true`) or removing one electron from `FSD(sign)`
/// with coefficients `c[k][l]` over the empty (resp. filled) bands:
/// removal gives `sum V c^H [Lambda_k(q') Lambda_k(q')^H]_occ c`, addition
/// `sum V c^H [Lambda_k(-q') Lambda_k(-q')^H]_empty c`, both over
/// `N_k |Omega|`.
pub fn charge_gap(t: &FormFactorTable, int: &Interaction, sign: i32, add: bool, c: &[Vec<C64>]) -> Result<f64> {
    let m = t.m;
    if c.len() != t.n_k() || c.iter().any(|x| x.len() != m) {
        return Err(FbiError::InvalidInput(format!("coefficients must be {} x {m}", t.n_k())));
    }
    let nrm: f64 = c.iter().flatten().map(|z| z.norm_sqr()).sum();
    if (nrm - 1.0).abs() > 1e-10 {
        return Err(FbiError::InvalidInput(format!("coefficients not normalised (|c|^2 = {nrm})")));
    }
    let first = if (sign > 0) != add { 0 } else { m };
    let mut e = 0.0;
    for q in 0..t.n_k() {
        for (slot, &g) in t.shells[q].iter().enumerate() {
            let v = int.v(t.momentum(q, slot));
            for (k, ck) in c.iter().enumerate() {
                let l = if add {
                    let (nq, ng) = t.negate(q, g);
                    t.get(k, nq, ng).expect("negated shell entry")
                } else {
                    t.get_slot(k, q, slot)
                };
                let ll = l * l.adjoint();
                let mut s = C64::new(0.0, 0.0);
                for a in 0..m {
                    for b in 0..m {
                        s += ck[a].conj() * ll[(first + a, first + b)] * ck[b];
                    }
                }
                e += v * s.re;
            }
        }
    }
    Ok(e * prefactor(t))
}

/// `Phi = diag(U1, U2) [[cos(theta/2)], [sin(theta/2)]] V^H` for an
/// orthonormal basis `Phi` of the range of `P`, so that
/// `Q = diag(U1, U2) [[c, s], [s, -c]] diag(U1, U2)^H` with `c = cos theta`.
#[derive(Clone, Debug)]
pub struct CsDecomposition {
    pub u1: CMat,
    pub u2: CMat,
    pub v: CMat,
    pub theta: Vec<f64>,
}

impl CsDecomposition {
    fn blocks(&self) -> CMat {
        let m = self.theta.len();
        let mut w = CMat::zeros(2 * m, 2 * m);
        w.view_mut((0, 0), (m, m)).copy_from(&self.u1);
        w.view_mut((m, m), (m, m)).copy_from(&self.u2);
        w
    }

    pub fn q(&self) -> CMat {
        let m = self.theta.len();
        let mut c = CMat::zeros(2 * m, 2 * m);
        for (i, &t) in self.theta.iter().enumerate() {
            c[(i, i)] = C64::new(t.cos(), 0.0);
            c[(m + i, m + i)] = C64::new(-t.cos(), 0.0);
            c[(i, m + i)] = C64::new(t.sin(), 0.0);
            c[(m + i, i)] = C64::new(t.sin(), 0.0);
        }
        let w = self.blocks();
        &w * c * w.adjoint()
    }

    pub fn projector(&self) -> CMat {
        let m = self.theta.len();
        (self.q() + CMat::identity(2 * m, 2 * m)) * C64::new(0.5, 0.0)
    }
}

pub fn cs_decompose(p: &CMat, m: usize) -> Result<CsDecomposition> {
    if p.nrows() != 2 * m || p.ncols() != 2 * m {
        return Err(FbiError::InvalidInput(format!("projector must be {0}x{0}", 2 * m)));
    }
    let (vals, vecs) = eigh(p)?;
    let rank = vals.iter().filter(|&&x| x > 0.5).count();
    if rank != m || vals.iter().any(|&x| x.min((x - 1.0).abs()) > 1e-8) {
        return Err(FbiError::InvalidInput(format!("P is not a rank-{m} projector (eigenvalues {vals:?})")));
    }
    let phi = vecs.columns(m, m).into_owned();
    let phi1 = phi.rows(0, m).into_owned();
    let phi2 = phi.rows(m, m).into_owned();
    let d = svd(&phi1)?;
    let theta: Vec<f64> = d.s.iter().map(|&c| 2.0 * c.min(1.0).acos()).collect();
    let y = &phi2 * &d.v;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| y.column(b).norm().total_cmp(&y.column(a).norm()));
    let mut u2 = CMat::zeros(m, m);
    let mut filled: Vec<usize> = Vec::new();
    for &i in &order {
        let mut col = y.column(i).into_owned();
        if col.norm() < 1e-12 {
            continue;
        }
        for &f in &filled {
            let proj = u2.column(f).dotc(&col);
            col -= u2.column(f) * proj;
        }
        let nrm = col.norm();
        u2.set_column(i, &(col / C64::new(nrm, 0.0)));
        filled.push(i);
    }
    if filled.len() < m {
        let mut e = 0;
        for &i in &order {
            if filled.contains(&i) {
                continue;
            }
            loop {
                let mut col = crate::linalg::CVec::zeros(m);
                col[e % m] = C64::new(1.0, 0.0);
                e += 1;
                for &f in &filled {
                    let proj = u2.column(f).dotc(&col);
                    col -= u2.column(f) * proj;
                }
                let nrm = col.norm();
                if nrm > 0.5 {
                    u2.set_column(i, &(col / C64::new(nrm, 0.0)));
                    filled.push(i);
                    break;
                }
            }
        }
    }
    // angles ascending; the same column permutation on U1, U2 and V
    let mut perm: Vec<usize> = (0..m).collect();
    perm.sort_by(|&a, &b| theta[a].total_cmp(&theta[b]).then(a.cmp(&b)));
    let pick = |x: &CMat| CMat::from_fn(m, m, |r, c| x[(r, perm[c])]);
    Ok(CsDecomposition { u1: pick(&d.u), u2: pick(&u2), v: pick(&d.v), theta: perm.iter().map(|&i| theta[i]).collect() })
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
    CMat::from_fn(r, c, |_, _| {
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        C64::new(a, b)
    })
}

/// Haar-like random unitary from the QR factor of a Gaussian matrix.
pub fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> CMat {
    let g = gaussian(rng, n, n);
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = q;
    for i in 0..n {
        let d = r[(i, i)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        let mut col = q.column_mut(i);
        col *= ph;
    }
    q
}

/// Random rank-`m` projector on `2m` bands.
pub fn random_projector(m: usize, rng: &mut ChaCha8Rng) -> CMat {
    let u = random_unitary(2 * m, rng);
    let phi = u.columns(0, m).into_owned();
    &phi * phi.adjoint()
}

/// Independent random projectors at every `k`.
pub fn random_density(n_k: usize, m: usize, seed: u64) -> Vec<CMat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_k).map(|_| random_projector(m, &mut rng)).collect()
}

/// Projectors obtained from `FSD+` by random CS angles in `[0, amplitude]`
/// and random `U1, U2` per `k`.
pub fn cs_perturbation(n_k: usize, m: usize, amplitude: f64, seed: u64) -> Vec<CMat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_k)
        .map(|_| {
            let theta: Vec<f64> = (0..m).map(|_| amplitude * rand::Rng::gen::<f64>(&mut rng)).collect();
            let cs = CsDecomposition {
                u1: random_unitary(m, &mut rng),
                u2: random_unitary(m, &mut rng),
                v: CMat::identity(m, m),
                theta,
            };
            cs.projector()
        })
        .collect()
}
