//! Chiral continuum operator of twisted multilayer graphene in a
//! plane-wave basis.
//!
//! The operator acting on the A sublattice is
//! `D(alpha) + k`, tridiagonal in the layer index with the Dirac term
//! `D_x1 + i D_x2` on the diagonal, `alpha U_+` above and `alpha U_-` below.
//! `U_-(r) = U_+(-r)`. Layer `j` carries momenta `k + o_j + G`; the offsets
//! `o_j` take values in `{0, q1, -q1}` and are chosen so that
//! `o_{j+1} - o_j = q1 (mod G)`, `o_j + o_{N-1-j} = 0` and `R3 o_j = o_j (mod G)`.
//! With this choice `k = 0` is the point fixed by the layer-exchange
//! symmetry and `k = +-q1` are the Dirac points.

use crate::error::{FbiError, Result};
use crate::lattice::{self, omega, recip, Vec2, Q1};
use crate::linalg::CMat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Fourier modes of `U_+`. Mode `(a, b)` has momentum `-q1 + a g1 + b g2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub name: String,
    pub modes: Vec<([i32; 2], C64)>,
}

impl Potential {
    /// `U0(r) = sum_j omega^j exp(-i q_{j+1} . r)`.
    pub fn u0() -> Self {
        let w = omega();
        Potential {
            name: "U0".into(),
            modes: vec![([0, 0], C64::new(1.0, 0.0)), ([-1, 0], w), ([0, -1], w * w)],
        }
    }

    /// `(U0 - sum_j omega^j exp(2 i q_{j+1} . r)) / sqrt 2`.
    pub fn u78() -> Self {
        let w = omega();
        let s = 1.0 / 2f64.sqrt();
        let one = C64::new(1.0, 0.0);
        Potential {
            name: "U78".into(),
            modes: vec![
                ([0, 0], one * s),
                ([-1, 0], w * s),
                ([0, -1], w * w * s),
                ([-1, -1], -one * s),
                ([1, -1], -w * s),
                ([-1, 1], -w * w * s),
            ],
        }
    }

    pub fn from_modes(name: &str, modes: Vec<([i32; 2], C64)>) -> Result<Self> {
        if modes.is_empty() {
            return Err(FbiError::InvalidInput("potential has no Fourier modes".into()));
        }
        Ok(Potential { name: name.into(), modes })
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "u0" => Ok(Self::u0()),
            "u78" | "u7/8" => Ok(Self::u78()),
            _ => Err(FbiError::InvalidInput(format!("unknown potential '{name}'"))),
        }
    }

    pub fn mode_momentum(g: [i32; 2]) -> Vec2 {
        lattice::sub(recip(g), Q1)
    }

    pub fn eval_plus(&self, r: Vec2) -> C64 {
        self.modes
            .iter()
            .map(|&(g, c)| c * C64::from_polar(1.0, lattice::dot(Self::mode_momentum(g), r)))
            .sum()
    }

    pub fn eval_minus(&self, r: Vec2) -> C64 {
        self.eval_plus([-r[0], -r[1]])
    }

    /// Largest violation of the defining symmetries of `U_+`:
    /// `U(r + v_i) = omega U(r)`, `U(R r) = omega U(r)` and
    /// `conj U(x, -y) = U(x, y)`, checked mode by mode.
    pub fn symmetry_residual(&self) -> f64 {
        let w = omega();
        let coeff = |p: Vec2| -> C64 {
            self.modes
                .iter()
                .find(|(g, _)| lattice::norm(lattice::sub(Self::mode_momentum(*g), p)) < 1e-9)
                .map(|&(_, c)| c)
                .unwrap_or(C64::new(0.0, 0.0))
        };
        let mut worst = 0.0f64;
        for &(g, c) in &self.modes {
            let p = Self::mode_momentum(g);
            for v in [lattice::V1, lattice::V2] {
                worst = worst.max((C64::from_polar(1.0, lattice::dot(p, v)) - w).norm() * c.norm());
            }
            // U(R r) = sum c e^{i (R^-1 p) r}
            let rinv = lattice::rot3(lattice::rot3(p));
            worst = worst.max((c - w * coeff(rinv)).norm());
            worst = worst.max((c.conj() - coeff([-p[0], p[1]])).norm());
        }
        worst
    }
}

/// Offset of layer `j` (0-based) in thirds of the dual basis.
fn offset_thirds(n_layers: usize, j: usize) -> [i32; 2] {
    match ((n_layers - 1) + j) % 3 {
        0 => [0, 0],
        1 => [-1, -1],
        _ => [1, 1],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiralModel {
    pub n_layers: usize,
    pub potential: Potential,
}

impl ChiralModel {
    pub fn new(n_layers: usize, potential: Potential) -> Result<Self> {
        if n_layers < 2 {
            return Err(FbiError::InvalidInput(format!("need at least two layers, got {n_layers}")));
        }
        Ok(ChiralModel { n_layers, potential })
    }

    pub fn tbg(potential: Potential) -> Self {
        ChiralModel { n_layers: 2, potential }
    }

    pub fn ettg(potential: Potential) -> Self {
        ChiralModel { n_layers: 3, potential }
    }

    /// Momentum offset `o_j` of layer `j`.
    pub fn layer_offset(&self, j: usize) -> Vec2 {
        let t = offset_thirds(self.n_layers, j);
        lattice::from_dual([t[0] as f64 / 3.0, t[1] as f64 / 3.0])
    }

    /// Reciprocal vector `G'` such that a mode `g` of `U_+` maps layer `j+1`
    /// momentum `k + o_{j+1} + G'` onto layer `j` momentum `k + o_j + G`.
    fn coupling_shift(&self, j: usize, g: [i32; 2], mode: [i32; 2]) -> [i32; 2] {
        let oj = offset_thirds(self.n_layers, j);
        let on = offset_thirds(self.n_layers, j + 1);
        let mut out = [0; 2];
        for a in 0..2 {
            let num = oj[a] - on[a] - 1;
            debug_assert_eq!(num.rem_euclid(3), 0);
            out[a] = g[a] - mode[a] + num / 3;
        }
        out
    }
}

/// Plane-wave basis on one sublattice: `(layer, G)` pairs with
/// `|k + o_j + G| <= cutoff`.
#[derive(Clone, Debug)]
pub struct PlaneWaveBasis {
    pub k: Vec2,
    pub cutoff: f64,
    pub n_layers: usize,
    pub entries: Vec<(usize, [i32; 2])>,
    lookup: HashMap<(usize, [i32; 2]), usize>,
}

impl PlaneWaveBasis {
    pub fn new(model: &ChiralModel, k: Vec2, cutoff: f64) -> Result<Self> {
        if !(cutoff >= lattice::norm(Q1)) {
            return Err(FbiError::InvalidInput(format!("plane-wave cutoff must be at least |q1| = 1, got {cutoff}")));
        }
        let bound = ((cutoff + lattice::norm(k) + 2.0) * 2.0 / 3.0).ceil() as i32 + 1;
        let mut entries = Vec::new();
        for j in 0..model.n_layers {
            let o = lattice::add(k, model.layer_offset(j));
            for a in -bound..=bound {
                for b in -bound..=bound {
                    let p = lattice::add(o, recip([a, b]));
                    if lattice::norm(p) <= cutoff {
                        entries.push((j, [a, b]));
                    }
                }
            }
        }
        let lookup = entries.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        Ok(PlaneWaveBasis { k, cutoff, n_layers: model.n_layers, entries, lookup })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn find(&self, layer: usize, g: [i32; 2]) -> Option<usize> {
        self.lookup.get(&(layer, g)).copied()
    }

    /// Absolute momentum `k + o_j + G` of entry `i`.
    pub fn momentum(&self, model: &ChiralModel, i: usize) -> Vec2 {
        let (j, g) = self.entries[i];
        lattice::add(lattice::add(self.k, model.layer_offset(j)), recip(g))
    }
}

/// Diagonal of `D(0) + k`: `p_x + i p_y` for each basis momentum.
pub fn dirac_diagonal(model: &ChiralModel, basis: &PlaneWaveBasis) -> Vec<C64> {
    (0..basis.len())
        .map(|i| {
            let p = basis.momentum(model, i);
            C64::new(p[0], p[1])
        })
        .collect()
}

/// Interlayer coupling `W` so that `D(alpha) + k = diag + alpha W`.
pub fn coupling_matrix(model: &ChiralModel, basis: &PlaneWaveBasis) -> CMat {
    let n = basis.len();
    let mut w = CMat::zeros(n, n);
    for (row, &(j, g)) in basis.entries.iter().enumerate() {
        if j + 1 >= model.n_layers {
            continue;
        }
        for &(mode, cf) in &model.potential.modes {
            let gp = model.coupling_shift(j, g, mode);
            if let Some(col) = basis.find(j + 1, gp) {
                // U_+ above the diagonal, U_-(r) = U_+(-r) below it.
                w[(row, col)] += cf;
                w[(col, row)] += cf;
            }
        }
    }
    w
}

/// `D(alpha) + k` in the plane-wave basis.
pub fn dirac_operator(model: &ChiralModel, basis: &PlaneWaveBasis, alpha: C64) -> CMat {
    let mut m = coupling_matrix(model, basis) * alpha;
    for (i, d) in dirac_diagonal(model, basis).into_iter().enumerate() {
        m[(i, i)] += d;
    }
    m
}

/// Chiral Bloch Hamiltonian `[[0, M^H], [M, 0]]` with A components first.
pub fn bloch_hamiltonian(model: &ChiralModel, basis: &PlaneWaveBasis, alpha: f64) -> CMat {
    let m = dirac_operator(model, basis, C64::new(alpha, 0.0));
    let n = m.nrows();
    let mut h = CMat::zeros(2 * n, 2 * n);
    h.view_mut((0, n), (n, n)).copy_from(&m.adjoint());
    h.view_mut((n, 0), (n, n)).copy_from(&m);
    h
}

/// Lowest `n_bands` non-negative band energies along a path; by chiral
/// symmetry the spectrum of the Bloch Hamiltonian is `+-` the singular values
/// of `D(alpha) + k`.
pub fn band_structure(
    model: &ChiralModel,
    alpha: f64,
    path: &[Vec2],
    cutoff: f64,
    n_bands: usize,
) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;
    path.par_iter()
        .map(|&k| {
            let basis = PlaneWaveBasis::new(model, k, cutoff)?;
            let m = dirac_operator(model, &basis, C64::new(alpha, 0.0));
            let s = crate::linalg::singular_values(&m);
            Ok(s.into_iter().take(n_bands).collect())
        })
        .collect()
}

/// Straight-line path through the given dual-coordinate corners.
pub fn kpath(corners: &[Vec2], n_points: usize) -> Vec<Vec2> {
    if corners.len() < 2 || n_points < 2 {
        return corners.iter().map(|&t| lattice::from_dual(t)).collect();
    }
    let segs = corners.len() - 1;
    (0..n_points)
        .map(|i| {
            let s = i as f64 / (n_points - 1) as f64 * segs as f64;
            let a = (s.floor() as usize).min(segs - 1);
            let f = s - a as f64;
            let t = [
                corners[a][0] + f * (corners[a + 1][0] - corners[a][0]),
                corners[a][1] + f * (corners[a + 1][1] - corners[a][1]),
            ];
            lattice::from_dual(t)
        })
        .collect()
}

/// Default high-symmetry path `K -> Gamma -> K' -> K` in dual coordinates.
pub fn default_path() -> Vec<Vec2> {
    let k = lattice::to_dual(Q1);
    vec![k, [0.0, 0.0], [-k[0], -k[1]], [k[0] + 1.0, k[1]]]
}
