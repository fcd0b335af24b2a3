//! Flat-band Bloch functions on a momentum grid and their gauge.
//!
//! At each grid point the A-polarised flat states span the kernel of
//! `D(alpha) + k`. Bands are ordered `n = 1..M` (A sublattice) followed by
//! `n = -1..-M` (B sublattice). The negative bands are the images of the
//! positive ones under `Q u(r; sigma, j) = conj u(-r; -sigma, j)`, which in
//! Fourier space is conjugation plus a sublattice swap at fixed `G`.
//!
//! Amplitudes are stored with unit norm; the Fourier coefficients with the
//! normalisation `sum_G |u(G)|^2 = |Omega|` are `sqrt(|Omega|)` times them.

use crate::chiral::{dirac_operator, ChiralModel, PlaneWaveBasis};
use crate::error::{FbiError, Result};
use crate::lattice::{self, KGrid, Vec2, CELL_AREA};
use crate::linalg::{eigh, projector, singular_values, svd, CMat};
use serde::{Deserialize, Serialize};
use crate::magic::FLAT_TOL;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

/// Step used to resolve the flat subspace at band crossings.
const CROSSING_STEP: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct KState {
    /// Grid momentum (Cartesian).
    pub k: Vec2,
    /// Plane-wave entries `(layer, G)` shared by both sublattices.
    pub entries: Vec<(usize, [i32; 2])>,
    /// A-sublattice amplitudes of bands `1..M`, one column per band.
    pub coeffs: CMat,
    bound: i32,
    n_layers: usize,
    slots: Vec<i32>,
}

impl KState {
    pub(crate) fn new(k: Vec2, entries: Vec<(usize, [i32; 2])>, coeffs: CMat, n_layers: usize) -> Self {
        let bound = entries
            .iter()
            .map(|(_, g)| g[0].abs().max(g[1].abs()))
            .max()
            .unwrap_or(0);
        let side = (2 * bound + 1) as usize;
        let mut slots = vec![-1i32; n_layers * side * side];
        for (i, &(j, g)) in entries.iter().enumerate() {
            slots[Self::slot(bound, j, g)] = i as i32;
        }
        KState { k, entries, coeffs, bound, n_layers, slots }
    }

    fn slot(bound: i32, layer: usize, g: [i32; 2]) -> usize {
        let side = (2 * bound + 1) as usize;
        layer * side * side + (g[0] + bound) as usize * side + (g[1] + bound) as usize
    }

    /// Row of entry `(layer, G)`, if present in the truncated basis.
    pub fn index_of(&self, layer: usize, g: [i32; 2]) -> Option<usize> {
        if layer >= self.n_layers || g[0].abs() > self.bound || g[1].abs() > self.bound {
            return None;
        }
        let s = self.slots[Self::slot(self.bound, layer, g)];
        (s >= 0).then_some(s as usize)
    }

    pub fn n_bands(&self) -> usize {
        self.coeffs.ncols()
    }

    /// Unit-norm amplitude of band `b` (0-based, `M` bands per sublattice
    /// with the negative ones at `M..2M`) on sublattice `sigma` (0 = A).
    pub fn amplitude(&self, b: usize, sigma: usize, layer: usize, g: [i32; 2]) -> C64 {
        let m = self.n_bands();
        let Some(i) = self.index_of(layer, g) else { return C64::new(0.0, 0.0) };
        match (b < m, sigma) {
            (true, 0) => self.coeffs[(i, b)],
            (false, 1) => self.coeffs[(i, b - m)].conj(),
            _ => C64::new(0.0, 0.0),
        }
    }

    /// Fourier coefficient normalised to `sum |u(G)|^2 = |Omega|`.
    pub fn u_hat(&self, b: usize, sigma: usize, layer: usize, g: [i32; 2]) -> C64 {
        self.amplitude(b, sigma, layer, g) * CELL_AREA.sqrt()
    }

    /// Positive band `b` in real space, one A-sublattice value per layer:
    /// `u(r; j) = sum_G c(G) e^{i(G + o_j) r} / sqrt(|Omega|)`, unit norm on
    /// the cell. The layer phases `e^{i o_j r}` cancel in pair products.
    pub fn eval(&self, model: &ChiralModel, b: usize, r: Vec2) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.n_layers];
        let scale = 1.0 / CELL_AREA.sqrt();
        for (i, &(j, g)) in self.entries.iter().enumerate() {
            let p = lattice::add(lattice::recip(g), model.layer_offset(j));
            let ph = C64::from_polar(scale, lattice::dot(p, r));
            out[j] += self.coeffs[(i, b)] * ph;
        }
        out
    }

    /// All `2M` bands as columns over rows `(A entries, B entries)`.
    pub fn full_vectors(&self) -> CMat {
        let n = self.entries.len();
        let m = self.n_bands();
        let mut out = CMat::zeros(2 * n, 2 * m);
        for i in 0..n {
            for b in 0..m {
                out[(i, b)] = self.coeffs[(i, b)];
                out[(n + i, m + b)] = self.coeffs[(i, b)].conj();
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct FlatBandBasis {
    pub model: ChiralModel,
    pub alpha: f64,
    pub cutoff: f64,
    pub grid: KGrid,
    /// Number of flat bands per sublattice.
    pub m: usize,
    pub states: Vec<KState>,
    /// Grid indices where extra zero modes cross the flat bands.
    pub crossings: Vec<usize>,
}

/// Kernel of `D(alpha) + k` at one momentum, with the singular values.
fn kernel_at(model: &ChiralModel, basis: &PlaneWaveBasis, alpha: f64) -> Result<(CMat, Vec<f64>)> {
    let m = dirac_operator(model, basis, C64::new(alpha, 0.0));
    let d = svd(&m)?;
    let dim = d.s.iter().take_while(|&&x| x < FLAT_TOL).count();
    Ok((d.v.columns(0, dim).into_owned(), d.s))
}

fn flat_projector_near(model: &ChiralModel, basis: &PlaneWaveBasis, alpha: f64, k: Vec2, m: usize) -> Result<CMat> {
    let mut b = basis.clone();
    b.k = k;
    let (ker, s) = kernel_at(model, &b, alpha)?;
    if ker.ncols() != m {
        return Err(FbiError::Gauge(format!(
            "near a crossing the kernel has dimension {} instead of {m}; singular values {:?}",
            ker.ncols(),
            &s[..(m + 2).min(s.len())]
        )));
    }
    Ok(projector(&ker))
}

/// Flat subspace at a crossing point: the `m`-dimensional part of the kernel
/// that continues the flat bands, from projectors at nearby momenta
/// symmetrised in `+-eps` and Richardson-extrapolated in `eps`.
fn resolve_crossing(model: &ChiralModel, basis: &PlaneWaveBasis, alpha: f64, ker: &CMat, m: usize) -> Result<CMat> {
    let k = basis.k;
    let d = [0.6, 0.8];
    let avg = |e: f64| -> Result<CMat> {
        let p1 = flat_projector_near(model, basis, alpha, lattice::add(k, lattice::scale(e, d)), m)?;
        let p2 = flat_projector_near(model, basis, alpha, lattice::sub(k, lattice::scale(e, d)), m)?;
        Ok((p1 + p2) * C64::new(0.5, 0.0))
    };
    let p = (avg(CROSSING_STEP)? * C64::new(4.0, 0.0) - avg(2.0 * CROSSING_STEP)?) * C64::new(1.0 / 3.0, 0.0);
    let r = ker.adjoint() * p * ker;
    let herm = (&r + r.adjoint()) * C64::new(0.5, 0.0);
    let (vals, vecs) = eigh(&herm)?;
    let n = vals.len();
    if vals[n - m] < 1.0 - 1e-4 {
        return Err(FbiError::Gauge(format!(
            "crossing point: flat continuation leaves the kernel (overlap {})",
            vals[n - m]
        )));
    }
    let w = vecs.columns(n - m, m).into_owned();
    Ok(ker * w)
}

/// Fix the phase of each column so its largest entry is real and positive.
fn fix_phases(v: &mut CMat) {
    for mut col in v.column_iter_mut() {
        let mut best = C64::new(0.0, 0.0);
        for z in col.iter() {
            if z.norm() > best.norm() + 1e-12 {
                best = *z;
            }
        }
        if best.norm() > 0.0 {
            let ph = best.conj() / best.norm();
            col.iter_mut().for_each(|z| *z *= ph);
        }
    }
}

/// Flat states at a single momentum `k` (Cartesian), resolved at crossings
/// and phase-fixed like the grid states.
pub fn flat_state(model: &ChiralModel, alpha: f64, cutoff: f64, k: Vec2, m: Option<usize>) -> Result<KState> {
    let basis = PlaneWaveBasis::new(model, k, cutoff)?;
    let (ker, _) = kernel_at(model, &basis, alpha)?;
    let m = m.unwrap_or(ker.ncols());
    if m == 0 {
        return Err(FbiError::NotMagic(format!("no flat bands at alpha = {alpha}")));
    }
    if ker.ncols() < m {
        return Err(FbiError::FlatDimension { k: 0, found: ker.ncols(), expected: m });
    }
    let mut v = if ker.ncols() > m { resolve_crossing(model, &basis, alpha, &ker, m)? } else { ker };
    fix_phases(&mut v);
    Ok(KState::new(basis.k, basis.entries, v, model.n_layers))
}

impl FlatBandBasis {
    /// Flat-band states on the grid. `m` is the expected number of flat bands
    /// per sublattice; `None` takes the smallest kernel dimension on the grid.
    pub fn compute(model: &ChiralModel, alpha: f64, cutoff: f64, grid: KGrid, m: Option<usize>) -> Result<Self> {
        let raw: Vec<(PlaneWaveBasis, CMat, Vec<f64>)> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let basis = PlaneWaveBasis::new(model, grid.point(idx), cutoff)?;
                let (ker, s) = kernel_at(model, &basis, alpha)?;
                Ok((basis, ker, s))
            })
            .collect::<Result<_>>()?;
        let min_dim = raw.iter().map(|r| r.1.ncols()).min().unwrap_or(0);
        let m = m.unwrap_or(min_dim);
        if m == 0 {
            return Err(FbiError::NotMagic(format!("no flat bands at alpha = {alpha}")));
        }
        for (idx, r) in raw.iter().enumerate() {
            if r.1.ncols() < m {
                return Err(FbiError::FlatDimension { k: idx, found: r.1.ncols(), expected: m });
            }
        }
        let crossings: Vec<usize> = (0..grid.len()).filter(|&i| raw[i].1.ncols() > m).collect();
        let mut vecs: Vec<CMat> = raw
            .par_iter()
            .map(|(basis, ker, _)| {
                if ker.ncols() > m {
                    resolve_crossing(model, basis, alpha, ker, m)
                } else {
                    Ok(ker.clone())
                }
            })
            .collect::<Result<_>>()?;
        vecs.iter_mut().for_each(fix_phases);
        let mut states: Vec<KState> = raw
            .into_iter()
            .zip(vecs)
            .map(|((basis, _, _), v)| KState::new(basis.k, basis.entries, v, model.n_layers))
            .collect();

        // Layer-exchange gauge: u_k = L u_{-k} on the secondary half of the grid.
        for idx in 0..grid.len() {
            let p = grid.neg(idx);
            if p == idx || !is_secondary(&grid, idx, p) {
                continue;
            }
            let rebuilt = layer_image(model, &states[p], &states[idx])?;
            states[idx] = rebuilt;
        }

        let fb = FlatBandBasis { model: model.clone(), alpha, cutoff, grid, m, states, crossings };
        fb.check_kernel()?;
        Ok(fb)
    }

    pub fn n_k(&self) -> usize {
        self.grid.len()
    }

    /// Largest residual `|(D(alpha)+k) u|` over positive bands, and of
    /// `(D(alpha)+k)^H conj(u)` for their sublattice images.
    pub fn kernel_residual(&self) -> Result<f64> {
        let res: Vec<f64> = self
            .states
            .par_iter()
            .map(|st| {
                let basis = PlaneWaveBasis::new(&self.model, st.k, self.cutoff)?;
                let mm = dirac_operator(&self.model, &basis, C64::new(self.alpha, 0.0));
                let v = reorder(&basis, st)?;
                let a = (&mm * &v).norm();
                let b = (mm.adjoint() * v.map(|z| z.conj())).norm();
                Ok(a.max(b))
            })
            .collect::<Result<_>>()?;
        Ok(res.into_iter().fold(0.0, f64::max))
    }

    fn check_kernel(&self) -> Result<()> {
        let r = self.kernel_residual()?;
        if r > FLAT_TOL * (self.m as f64).sqrt() * 10.0 {
            return Err(FbiError::Gauge(format!("flat states or their sublattice images leave the flat space (residual {r:.3e})")));
        }
        Ok(())
    }

    /// Apply a unitary `U(k)` (M x M) to the positive bands at each `k`; the
    /// negative bands follow through the sublattice map.
    pub fn rotate(&self, unitaries: &[CMat]) -> Self {
        let mut out = self.clone();
        for (st, u) in out.states.iter_mut().zip(unitaries) {
            st.coeffs = &st.coeffs * u;
        }
        out
    }
}

/// Outcome of the grid assumption `|Pi(k) - Pi(k')| < 1` over neighbours.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCheck {
    pub max_distance: f64,
    /// Grid indices attaining the maximum.
    pub worst_pair: (usize, usize),
    pub pass: bool,
}

impl FlatBandBasis {
    /// `|Pi(k) - Pi(k')|` for grid indices, with `k'` moved to the
    /// representative closest to `k`. Both projectors have rank `2M`, so the
    /// distance is `sqrt(1 - sigma_min^2)` of the overlap.
    pub fn projector_distance(&self, k: usize, kp: usize) -> Result<f64> {
        let d = lattice::min_image(lattice::sub(self.grid.point(kp), self.grid.point(k)));
        let target = lattice::add(self.grid.point(k), d);
        let gs = lattice::to_dual(lattice::sub(target, self.grid.point(kp)));
        let gs = [gs[0].round() as i32, gs[1].round() as i32];
        let o = crate::formfactor::overlap_full(&self.states[k], &self.states[kp], gs);
        let s = singular_values(&o)[0].min(1.0);
        Ok((1.0 - s * s).sqrt())
    }

    pub fn check_grid_assumption(&self) -> Result<GridCheck> {
        let mut best = GridCheck { max_distance: 0.0, worst_pair: (0, 0), pass: true };
        for k in 0..self.n_k() {
            for kp in self.grid.neighbours(k) {
                let d = self.projector_distance(k, kp)?;
                if d > best.max_distance {
                    best.max_distance = d;
                    best.worst_pair = (k, kp);
                }
            }
        }
        best.pass = best.max_distance < 1.0;
        Ok(best)
    }
}

/// Coefficients of `st` re-ordered to the rows of a freshly built basis.
fn reorder(basis: &PlaneWaveBasis, st: &KState) -> Result<CMat> {
    let mut v = CMat::zeros(basis.len(), st.n_bands());
    for (row, &(j, g)) in basis.entries.iter().enumerate() {
        let i = st
            .index_of(j, g)
            .ok_or_else(|| FbiError::Gauge("basis mismatch between stored and rebuilt states".into()))?;
        v.set_row(row, &st.coeffs.row(i));
    }
    Ok(v)
}

/// Which member of a `(k, -k)` pair is rebuilt from the other: the one whose
/// centred representative has negative first Cartesian component, ties
/// broken by the index.
fn is_secondary(grid: &KGrid, idx: usize, partner: usize) -> bool {
    let x = |i: usize| lattice::min_image(grid.point(i))[0];
    let (a, b) = (x(idx), x(partner));
    if (a - b).abs() > 1e-12 {
        a < b
    } else {
        idx > partner
    }
}

/// `u_k(G; j) = (-1)^(j+1) u_{-k}(-G - G_s; N-1-j)` (0-based layers), where
/// `k = -k_p + G_s` for grid representatives.
fn layer_image(model: &ChiralModel, src: &KState, dst: &KState) -> Result<KState> {
    let n = model.n_layers;
    let gs = lattice::to_dual(lattice::add(dst.k, src.k));
    let gs = [gs[0].round() as i32, gs[1].round() as i32];
    let mut coeffs = CMat::zeros(dst.entries.len(), src.n_bands());
    for (row, &(j, g)) in dst.entries.iter().enumerate() {
        let gp = [-g[0] - gs[0], -g[1] - gs[1]];
        let i = src
            .index_of(n - 1 - j, gp)
            .ok_or_else(|| FbiError::Gauge("layer image falls outside the partner basis".into()))?;
        let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
        for b in 0..src.n_bands() {
            coeffs[(row, b)] = src.coeffs[(i, b)] * sign;
        }
    }
    Ok(KState::new(dst.k, dst.entries.clone(), coeffs, n))
}
