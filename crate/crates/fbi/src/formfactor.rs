//! Form factors `Lambda_k(q + G)_{mn} = <u_{m,k} | u_{n,k+q+G}>` over the
//! periodic parts, for every grid pair `(k, q)` and every `G` in the shell
//! `|q + G| <= G_cut`.
//!
//! States at momenta off the grid are reached with
//! `u_{k+G'}(G) = u_k(G + G')`. Bands are ordered as in
//! [`crate::flatband`], so `Lambda = diag(A, conj A)` up to rounding.

use crate::error::{FbiError, Result};
use crate::chiral::ChiralModel;
use crate::flatband::{flat_state, FlatBandBasis, KState};
use crate::lattice::{self, recip, KGrid, Vec2};
use crate::linalg::{max_abs, singular_values, CMat};
use rayon::prelude::*;
use std::collections::HashMap;

#[derive(Clone, Debug)]
pub struct FormFactorTable {
    pub grid: KGrid,
    /// Flat bands per sublattice; matrices are `2M x 2M`.
    pub m: usize,
    pub g_cut: f64,
    /// For each grid `q`, the reciprocal vectors with `|q + G| <= g_cut`.
    pub shells: Vec<Vec<[i32; 2]>>,
    slot_of: Vec<HashMap<[i32; 2], usize>>,
    /// `data[k][q][slot]`.
    data: Vec<Vec<Vec<CMat>>>,
}

/// Largest `G_cut` compatible with the plane-wave cutoff on this grid.
pub fn max_g_cut(grid: &KGrid, cutoff: f64) -> f64 {
    let qmax = (0..grid.len())
        .map(|i| lattice::norm(lattice::min_image(grid.point(i))))
        .fold(0.0, f64::max);
    cutoff - qmax
}

/// Shell of reciprocal vectors with `|q + G| <= g_cut`, sorted.
pub fn shell(q: Vec2, g_cut: f64) -> Vec<[i32; 2]> {
    let bound = ((g_cut + lattice::norm(q) + 2.0) * 2.0 / 3.0).ceil() as i32 + 1;
    let mut out = Vec::new();
    for a in -bound..=bound {
        for b in -bound..=bound {
            if lattice::norm(lattice::add(q, recip([a, b]))) <= g_cut + 1e-12 {
                out.push([a, b]);
            }
        }
    }
    out
}

/// `Lambda` between the states at `src` and at `dst` shifted by `gs`:
/// `sum_{sigma j G} conj(u_src(G)) u_dst(G + gs)` over both sublattices.
pub fn overlap_full(src: &KState, dst: &KState, gs: [i32; 2]) -> CMat {
    overlap_with(src, &src.full_vectors(), dst, &dst.full_vectors(), gs)
}

fn overlap_with(src: &KState, x: &CMat, dst: &KState, y: &CMat, gs: [i32; 2]) -> CMat {
    let n_src = src.entries.len();
    let n_dst = dst.entries.len();
    let mut out = CMat::zeros(x.ncols(), y.ncols());
    for (i, &(j, g)) in src.entries.iter().enumerate() {
        if let Some(l) = dst.index_of(j, [g[0] + gs[0], g[1] + gs[1]]) {
            for s in 0..2 {
                let xi = x.row(s * n_src + i);
                let yl = y.row(s * n_dst + l);
                out += xi.adjoint() * yl;
            }
        }
    }
    out
}

/// Pair product `rho_kk(r)_{mn} = sum_j conj(u_m(r; j)) u_n(r; j)` of the
/// positive bands. Its Fourier coefficients are `A_k(G)`:
/// `A_k(G) = int rho_kk(r) e^{-i G r} dr`.
pub fn pair_product(model: &ChiralModel, st: &KState, r: Vec2) -> CMat {
    let m = st.n_bands();
    let vals: Vec<Vec<_>> = (0..m).map(|b| st.eval(model, b, r)).collect();
    CMat::from_fn(m, m, |a, b| vals[a].iter().zip(&vals[b]).map(|(x, y)| x.conj() * y).sum())
}

/// Shift identity check: the states at `k` shifted by `G'` against a fresh
/// kernel computed at `k + G'`. Returns the largest `|sigma - 1|` of their
/// overlap, which vanishes when both span the same flat space.
pub fn shift_residual(basis: &FlatBandBasis, g_shift: [i32; 2]) -> Result<f64> {
    let res: Vec<f64> = basis
        .states
        .par_iter()
        .map(|st| {
            let k = lattice::add(st.k, recip(g_shift));
            let fresh = flat_state(&basis.model, basis.alpha, basis.cutoff, k, Some(basis.m))?;
            let u = overlap_full(&fresh, st, g_shift);
            Ok(singular_values(&u).into_iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    Ok(res.into_iter().fold(0.0, f64::max))
}

impl FormFactorTable {
    pub fn compute(basis: &FlatBandBasis, g_cut: f64) -> Result<Self> {
        let grid = basis.grid;
        let limit = max_g_cut(&grid, basis.cutoff);
        if g_cut > limit + 1e-12 {
            return Err(FbiError::Aliasing { g_cut, basis_cut: basis.cutoff, limit });
        }
        let shells: Vec<Vec<[i32; 2]>> = (0..grid.len()).map(|q| shell(grid.point(q), g_cut)).collect();
        let slot_of = shells
            .iter()
            .map(|s| s.iter().enumerate().map(|(i, &g)| (g, i)).collect())
            .collect();
        let fulls: Vec<CMat> = basis.states.iter().map(|s| s.full_vectors()).collect();
        let data: Vec<Vec<Vec<CMat>>> = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                (0..grid.len())
                    .map(|q| {
                        let (kq, gf) = grid.add_idx(k, q);
                        shells[q]
                            .iter()
                            .map(|g| {
                                let gs = [g[0] + gf[0], g[1] + gf[1]];
                                overlap_with(&basis.states[k], &fulls[k], &basis.states[kq], &fulls[kq], gs)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(FormFactorTable { grid, m: basis.m, g_cut, shells, slot_of, data })
    }

    pub fn n_k(&self) -> usize {
        self.grid.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.m
    }

    /// `Lambda_k(q + G)` for grid indices `k, q`.
    pub fn get(&self, k: usize, q: usize, g: [i32; 2]) -> Option<&CMat> {
        self.slot_of[q].get(&g).map(|&s| &self.data[k][q][s])
    }

    pub fn get_slot(&self, k: usize, q: usize, slot: usize) -> &CMat {
        &self.data[k][q][slot]
    }

    /// `Lambda_k(p)` for an arbitrary momentum `p` on the grid lattice.
    pub fn get_momentum(&self, k: usize, p: Vec2) -> Result<Option<&CMat>> {
        let (q, g) = self.grid.fold(p)?;
        Ok(self.get(k, q, g))
    }

    /// Momentum `q + G` of a shell slot.
    pub fn momentum(&self, q: usize, slot: usize) -> Vec2 {
        lattice::add(self.grid.point(q), recip(self.shells[q][slot]))
    }

    /// `(q, G)` index of `-(q + G)`.
    pub fn negate(&self, q: usize, g: [i32; 2]) -> (usize, [i32; 2]) {
        let (i, j) = self.grid.coords(q);
        let nq = self.grid.neg(q);
        let wrap = |x: usize| if x == 0 { 0 } else { 1 };
        // -(i/n) = (n - i)/n - 1 unless i = 0
        (nq, [-g[0] - wrap(i), -g[1] - wrap(j)])
    }

    /// `max_k |Lambda_k(0) - I|`.
    pub fn identity_residual(&self) -> f64 {
        let id = CMat::identity(self.dim(), self.dim());
        (0..self.n_k())
            .map(|k| max_abs(&(self.get(k, 0, [0, 0]).expect("q = 0 shell") - &id)))
            .fold(0.0, f64::max)
    }

    /// `max |Lambda_k(q')^H - Lambda_{k+q}(-q')|` over the table.
    pub fn dagger_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.n_k() {
            for q in 0..self.n_k() {
                let (kq, _) = self.grid.add_idx(k, q);
                for &g in &self.shells[q] {
                    let (nq, ng) = self.negate(q, g);
                    let a = self.get(k, q, g).expect("shell entry");
                    let b = self.get(kq, nq, ng).expect("negated shell entry");
                    worst = worst.max(max_abs(&(a.adjoint() - b)));
                }
            }
        }
        worst
    }

    /// Largest entry in the off-diagonal sublattice blocks.
    pub fn block_residual(&self) -> f64 {
        let m = self.m;
        let mut worst = 0.0f64;
        for per_k in &self.data {
            for per_q in per_k {
                for l in per_q {
                    worst = worst.max(max_abs(&l.view((0, m), (m, m)).into_owned()));
                    worst = worst.max(max_abs(&l.view((m, 0), (m, m)).into_owned()));
                    let a = l.view((0, 0), (m, m)).into_owned();
                    let b = l.view((m, m), (m, m)).into_owned();
                    worst = worst.max(max_abs(&(a.map(|z| z.conj()) - b)));
                }
            }
        }
        worst
    }

    /// Positive-band block `A_k(q + G)`.
    pub fn a_block(&self, k: usize, q: usize, g: [i32; 2]) -> Option<CMat> {
        self.get(k, q, g).map(|l| l.view((0, 0), (self.m, self.m)).into_owned())
    }

    /// `max_G |sum_k Im tr A_k(G)|`.
    pub fn sum_rule_residual(&self) -> f64 {
        self.shells[0]
            .iter()
            .map(|&g| {
                (0..self.n_k())
                    .map(|k| self.a_block(k, 0, g).expect("shell entry").trace().im)
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    /// Apply gauge unitaries: `Lambda_k(q') -> U(k)^H Lambda_k(q') U(k+q)`,
    /// with `U = diag(u, conj u)`.
    pub fn transformed(&self, unitaries: &[CMat]) -> Self {
        let m = self.m;
        let full: Vec<CMat> = unitaries
            .iter()
            .map(|u| {
                let mut f = CMat::zeros(2 * m, 2 * m);
                f.view_mut((0, 0), (m, m)).copy_from(u);
                f.view_mut((m, m), (m, m)).copy_from(&u.map(|z| z.conj()));
                f
            })
            .collect();
        let mut out = self.clone();
        for k in 0..self.n_k() {
            for q in 0..self.n_k() {
                let (kq, _) = self.grid.add_idx(k, q);
                for l in out.data[k][q].iter_mut() {
                    *l = full[k].adjoint() * &*l * &full[kq];
                }
            }
        }
        out
    }

    /// CSV rows `k,q,G1,G2,m,n,re,im`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,q,G1,G2,m,n,re,im\n");
        for k in 0..self.n_k() {
            for q in 0..self.n_k() {
                for (slot, g) in self.shells[q].iter().enumerate() {
                    let l = &self.data[k][q][slot];
                    for a in 0..l.nrows() {
                        for b in 0..l.ncols() {
                            s.push_str(&format!(
                                "{k},{q},{},{},{a},{b},{},{}\n",
                                g[0],
                                g[1],
                                crate::io::fmt(l[(a, b)].re),
                                crate::io::fmt(l[(a, b)].im)
                            ));
                        }
                    }
                }
            }
        }
        s
    }
}
