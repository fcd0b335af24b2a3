//! Moire lattice, reciprocal lattice and Monkhorst-Pack momentum grids.
//!
//! Real-space lattice vectors `v1, v2` and reciprocal vectors `g1, g2`
//! satisfy `v_i . g_j = 2 pi delta_ij`. Momenta are often carried in dual
//! coordinates `t` with `p = t1 g1 + t2 g2`.

use crate::error::{FbiError, Result};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Vec2 = [f64; 2];

pub const SQRT3: f64 = 1.732_050_807_568_877_2;

pub const V1: Vec2 = [-2.0 * PI / SQRT3, -2.0 * PI / 3.0];
pub const V2: Vec2 = [2.0 * PI / SQRT3, -2.0 * PI / 3.0];
pub const G1: Vec2 = [-SQRT3 / 2.0, -1.5];
pub const G2: Vec2 = [SQRT3 / 2.0, -1.5];
pub const Q1: Vec2 = [0.0, 1.0];
pub const Q2: Vec2 = [-SQRT3 / 2.0, -0.5];
pub const Q3: Vec2 = [SQRT3 / 2.0, -0.5];

/// Area of the moire unit cell, `8 pi^2 / (3 sqrt 3)`.
pub const CELL_AREA: f64 = 8.0 * PI * PI / (3.0 * SQRT3);

/// Default dual-coordinate tolerance used when folding momenta onto a grid.
pub const FOLD_TOL: f64 = 1e-9;

/// `exp(2 pi i / 3)`.
pub fn omega() -> C64 {
    C64::from_polar(1.0, 2.0 * PI / 3.0)
}

pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn norm(a: Vec2) -> f64 {
    dot(a, a).sqrt()
}

pub fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn scale(s: f64, a: Vec2) -> Vec2 {
    [s * a[0], s * a[1]]
}

/// Counter-clockwise rotation by `2 pi / 3`.
pub fn rot3(a: Vec2) -> Vec2 {
    [
        -0.5 * a[0] - 0.5 * SQRT3 * a[1],
        0.5 * SQRT3 * a[0] - 0.5 * a[1],
    ]
}

/// Dual coordinates of a momentum: `p = t1 g1 + t2 g2`.
pub fn to_dual(p: Vec2) -> Vec2 {
    [dot(p, V1) / (2.0 * PI), dot(p, V2) / (2.0 * PI)]
}

pub fn from_dual(t: Vec2) -> Vec2 {
    [t[0] * G1[0] + t[1] * G2[0], t[0] * G1[1] + t[1] * G2[1]]
}

/// Reciprocal lattice vector with integer dual coordinates.
pub fn recip(g: [i32; 2]) -> Vec2 {
    from_dual([g[0] as f64, g[1] as f64])
}

/// Real-space point with lattice coordinates `r = s1 v1 + s2 v2`.
pub fn real_point(s: Vec2) -> Vec2 {
    [s[0] * V1[0] + s[1] * V2[0], s[0] * V1[1] + s[1] * V2[1]]
}

/// Smallest-norm representative of `p` modulo the reciprocal lattice.
pub fn min_image(p: Vec2) -> Vec2 {
    let t = to_dual(p);
    let base = [t[0] - t[0].round(), t[1] - t[1].round()];
    let mut best = from_dual(base);
    for a in -1..=1 {
        for b in -1..=1 {
            let c = from_dual([base[0] + a as f64, base[1] + b as f64]);
            if norm(c) < norm(best) - 1e-14 {
                best = c;
            }
        }
    }
    best
}

/// Monkhorst-Pack grid `{ (i/nkx) g1 + (j/nky) g2 }`, index `i * nky + j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KGrid {
    pub nkx: usize,
    pub nky: usize,
}

impl KGrid {
    pub fn new(nkx: usize, nky: usize) -> Result<Self> {
        if nkx == 0 || nky == 0 {
            return Err(FbiError::InvalidInput(format!(
                "grid dimensions must be positive, got {nkx}x{nky}"
            )));
        }
        Ok(KGrid { nkx, nky })
    }

    pub fn len(&self) -> usize {
        self.nkx * self.nky
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.nky + j
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx / self.nky, idx % self.nky)
    }

    pub fn dual(&self, idx: usize) -> Vec2 {
        let (i, j) = self.coords(idx);
        [i as f64 / self.nkx as f64, j as f64 / self.nky as f64]
    }

    pub fn point(&self, idx: usize) -> Vec2 {
        from_dual(self.dual(idx))
    }

    pub fn points(&self) -> Vec<Vec2> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Write `p = k + G` with `k` on the grid; fails when `p` is off-grid.
    pub fn fold(&self, p: Vec2) -> Result<(usize, [i32; 2])> {
        self.fold_tol(p, FOLD_TOL)
    }

    pub fn fold_tol(&self, p: Vec2, tol: f64) -> Result<(usize, [i32; 2])> {
        let t = to_dual(p);
        let n = [self.nkx as f64, self.nky as f64];
        let mut ij = [0usize; 2];
        let mut g = [0i32; 2];
        for a in 0..2 {
            let x = t[a] * n[a];
            let r = x.round();
            if (x - r).abs() > tol * n[a] {
                return Err(FbiError::OffGrid { p, grid: (self.nkx, self.nky) });
            }
            let r = r as i64;
            let m = n[a] as i64;
            let i = r.rem_euclid(m);
            ij[a] = i as usize;
            g[a] = ((r - i) / m) as i32;
        }
        Ok((self.index(ij[0], ij[1]), g))
    }

    /// Grid index of `-k`.
    pub fn neg(&self, idx: usize) -> usize {
        let (i, j) = self.coords(idx);
        self.index((self.nkx - i) % self.nkx, (self.nky - j) % self.nky)
    }

    /// Grid index of `k + q` together with the reciprocal vector left over
    /// when both are taken as their grid representatives.
    pub fn add_idx(&self, k: usize, q: usize) -> (usize, [i32; 2]) {
        let (i1, j1) = self.coords(k);
        let (i2, j2) = self.coords(q);
        let i = i1 + i2;
        let j = j1 + j2;
        (
            self.index(i % self.nkx, j % self.nky),
            [(i / self.nkx) as i32, (j / self.nky) as i32],
        )
    }

    /// Nearest-neighbour grid indices (periodic), without duplicates.
    pub fn neighbours(&self, idx: usize) -> Vec<usize> {
        let (i, j) = self.coords(idx);
        let mut out = Vec::new();
        let cand = [
            ((i + 1) % self.nkx, j),
            ((i + self.nkx - 1) % self.nkx, j),
            (i, (j + 1) % self.nky),
            (i, (j + self.nky - 1) % self.nky),
        ];
        for (a, b) in cand {
            let n = self.index(a, b);
            if n != idx && !out.contains(&n) {
                out.push(n);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duality() {
        for (v, gi) in [(V1, 0), (V2, 1)] {
            for (g, gj) in [(G1, 0), (G2, 1)] {
                let want = if gi == gj { 2.0 * PI } else { 0.0 };
                assert!((dot(v, g) - want).abs() < 1e-12);
            }
        }
        assert!((sub(Q2, Q1)[0] - G1[0]).abs() < 1e-15);
        assert!((norm(sub(sub(Q3, Q1), G2))) < 1e-15);
    }

    #[test]
    fn fold_q1() {
        let grid = KGrid::new(3, 3).unwrap();
        let (k, g) = grid.fold(Q1).unwrap();
        assert_eq!(grid.coords(k), (2, 2));
        assert_eq!(g, [-1, -1]);
        assert!(grid.fold(Q1).is_ok());
        assert!(KGrid::new(2, 2).unwrap().fold(Q1).is_err());
    }
}
