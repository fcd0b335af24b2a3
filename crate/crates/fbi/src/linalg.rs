//! Dense complex linear algebra: nalgebra containers, faer decompositions.

use crate::error::{FbiError, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn to_faer(m: &CMat) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, C64>) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Singular value decomposition with singular values in ascending order.
/// Returns `(u, s, v)` with `m = u diag(s) v^H`.
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

pub fn svd(m: &CMat) -> Result<Svd> {
    let d = to_faer(m)
        .svd()
        .map_err(|e| FbiError::Numerical(format!("svd: {e:?}")))?;
    let sv = d.S().column_vector();
    let n = sv.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sv[a].re.total_cmp(&sv[b].re));
    let s = order.iter().map(|&i| sv[i].re).collect();
    let u = from_faer(d.U()).select_columns(order.iter());
    let v = from_faer(d.V()).select_columns(order.iter());
    Ok(Svd { u, s, v })
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    let mut s = to_faer(m).singular_values().unwrap_or_default();
    s.sort_by(|a, b| a.total_cmp(b));
    s
}

/// Hermitian eigendecomposition, eigenvalues ascending.
pub fn eigh(m: &CMat) -> Result<(Vec<f64>, CMat)> {
    let e = to_faer(m)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| FbiError::Numerical(format!("eigh: {e:?}")))?;
    let s = e.S().column_vector();
    let vals = (0..s.nrows()).map(|i| s[i].re).collect();
    Ok((vals, from_faer(e.U())))
}

pub fn eigvalsh(m: &CMat) -> Result<Vec<f64>> {
    let mut v = to_faer(m)
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| FbiError::Numerical(format!("eigvalsh: {e:?}")))?;
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v)
}

/// Eigenvalues of a general complex matrix.
pub fn eigvals(m: &CMat) -> Result<Vec<C64>> {
    to_faer(m)
        .eigenvalues()
        .map_err(|e| FbiError::Numerical(format!("eigenvalues: {e:?}")))
}

/// LU factorisations of a square matrix and of its adjoint.
pub struct LuPair {
    lu: faer::linalg::solvers::PartialPivLu<C64>,
    lu_adj: faer::linalg::solvers::PartialPivLu<C64>,
}

impl LuPair {
    pub fn new(m: &CMat) -> Self {
        let f = to_faer(m);
        let lu = f.partial_piv_lu();
        let lu_adj = f.adjoint().to_owned().partial_piv_lu();
        LuPair { lu, lu_adj }
    }

    fn run(lu: &faer::linalg::solvers::PartialPivLu<C64>, b: &CVec) -> CVec {
        use faer::prelude::Solve;
        let rhs = faer::Mat::from_fn(b.len(), 1, |i, _| b[i]);
        let x = lu.solve(&rhs);
        CVec::from_fn(b.len(), |i, _| x[(i, 0)])
    }

    /// Solve `m x = b`.
    pub fn solve(&self, b: &CVec) -> CVec {
        Self::run(&self.lu, b)
    }

    /// Solve `m^H x = b`.
    pub fn solve_adjoint(&self, b: &CVec) -> CVec {
        Self::run(&self.lu_adj, b)
    }
}

/// Spectral norm.
pub fn norm2(m: &CMat) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// Largest absolute entry.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

/// Orthonormal basis of the column span via SVD, keeping directions with
/// singular value above `tol`.
pub fn orthonormalize(m: &CMat, tol: f64) -> Result<CMat> {
    let d = svd(m)?;
    let keep: Vec<usize> = (0..d.s.len()).rev().filter(|&i| d.s[i] > tol).collect();
    Ok(d.u.select_columns(keep.iter()))
}

/// Projector `V V^H` onto orthonormal columns.
pub fn projector(v: &CMat) -> CMat {
    v * v.adjoint()
}

/// Unitary `W` maximising `Re tr(W^H A)`, the polar factor of `A`.
pub fn polar_unitary(a: &CMat) -> Result<CMat> {
    let d = svd(a)?;
    Ok(&d.u * d.v.adjoint())
}

/// Fill `v` (n x r, orthonormal columns) to an n x n unitary.
pub fn complete_unitary(v: &CMat) -> Result<CMat> {
    let n = v.nrows();
    let r = v.ncols();
    if r == n {
        return Ok(v.clone());
    }
    let comp = CMat::identity(n, n) - projector(v);
    let d = svd(&comp)?;
    let mut out = CMat::zeros(n, n);
    out.columns_mut(0, r).copy_from(v);
    for (c, i) in (0..n).rev().take(n - r).enumerate() {
        out.set_column(r + c, &d.u.column(i));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_reconstructs() {
        let m = CMat::from_fn(4, 4, |i, j| c((i * 3 + j) as f64 % 5.0, (i as f64 - j as f64) * 0.3));
        let d = svd(&m).unwrap();
        let r = &d.u * CMat::from_diagonal(&DVector::from_iterator(4, d.s.iter().map(|&x| c(x, 0.0)))) * d.v.adjoint();
        assert!(max_abs(&(r - &m)) < 1e-12);
        assert!(d.s.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn general_eigenvalues() {
        let m = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)]);
        let mut e = eigvals(&m).unwrap();
        e.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert!((e[0] - c(0.0, -1.0)).norm() < 1e-12);
        assert!((e[1] - c(0.0, 1.0)).norm() < 1e-12);
    }
}
