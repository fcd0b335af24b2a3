//! Jacobi theta and Weierstrass functions on the hexagonal moiré lattice, and
//! closed-form flat-band states built from them.
//!
//! Positions enter through `zeta(r) = 3 (x1 + i x2) / (4 pi i omega)`, which
//! maps the real lattice onto `Z + omega Z`.

use crate::chiral::{dirac_operator, ChiralModel, PlaneWaveBasis};
use crate::error::{FbiError, Result};
use crate::flatband::KState;
use crate::lattice::{self, omega, Vec2, CELL_AREA, SQRT3};
use crate::linalg::{svd, CMat, CVec};
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

/// Distance to the lattice below which a pole is reported.
pub const POLE_TOL: f64 = 1e-8;

fn i() -> C64 {
    C64::new(0.0, 1.0)
}

/// Half-range of the theta series so that the first dropped term is below
/// `1e-17` relative to the largest one.
fn theta_terms(zeta: C64) -> i64 {
    // |term| = exp(-pi Im(omega) x^2 - 2 pi x Im(zeta)), x = n + 1/2, peaked
    // at x = -Im(zeta)/Im(omega)
    let b = omega().im;
    let x = zeta.im.abs() / b + (40.0 / (PI * b)).sqrt();
    x.ceil() as i64 + 1
}

/// `theta_1(zeta | omega) = -sum_n exp(pi i (n+1/2)^2 omega + 2 pi i (n+1/2)(zeta+1/2))`.
pub fn theta(zeta: C64) -> C64 {
    let w = omega();
    let n = theta_terms(zeta);
    let mut s = C64::new(0.0, 0.0);
    for k in -n..=n {
        let x = k as f64 + 0.5;
        s += (i() * PI * x * x * w + 2.0 * PI * i() * x * (zeta + 0.5)).exp();
    }
    -s
}

/// Derivative of [`theta`] in `zeta`.
pub fn theta_prime(zeta: C64) -> C64 {
    let w = omega();
    let n = theta_terms(zeta);
    let mut s = C64::new(0.0, 0.0);
    for k in -n..=n {
        let x = k as f64 + 0.5;
        s += 2.0 * PI * i() * x * (i() * PI * x * x * w + 2.0 * PI * i() * x * (zeta + 0.5)).exp();
    }
    -s
}

/// `x1 + i x2`.
pub fn complex_of(r: Vec2) -> C64 {
    C64::new(r[0], r[1])
}

pub fn zeta_of_z(z: C64) -> C64 {
    3.0 * z / (4.0 * PI * i() * omega())
}

pub fn zeta_of(r: Vec2) -> C64 {
    zeta_of_z(complex_of(r))
}

/// Periods of [`wp`]: `(4/3) pi i omega` and `(4/3) pi i omega^2`.
pub fn periods() -> (C64, C64) {
    let w = omega();
    (4.0 / 3.0 * PI * i() * w, 4.0 / 3.0 * PI * i() * w * w)
}

/// Reduce `zeta` into the cell `Re, Im/Im(omega)` in `[-1/2, 1/2)` of
/// `Z + omega Z`; returns the reduced value.
fn reduce(zeta: C64) -> C64 {
    let w = omega();
    let b = (zeta.im / w.im + 0.5).floor();
    let z1 = zeta - b * w;
    let a = (z1.re + 0.5).floor();
    z1 - a
}

fn check_pole(z: C64) -> Result<()> {
    let zr = reduce(zeta_of_z(z));
    let mut d = f64::INFINITY;
    let w = omega();
    for a in -1..=1 {
        for b in -1..=1 {
            d = d.min((zr - (a as f64) - (b as f64) * w).norm());
        }
    }
    // zeta units to length units
    let scale = 4.0 * PI / 3.0;
    if d * scale < POLE_TOL {
        return Err(FbiError::InvalidInput(format!("z = {z} is on the period lattice")));
    }
    Ok(())
}

/// Zero offset of the theta quotient for `wp`: `a = i / (sqrt(3) omega)`,
/// the image of `-r_S`.
fn wp_shift() -> C64 {
    i() / (SQRT3 * omega())
}

/// Weierstrass `wp(z; (4/3) pi i omega, (4/3) pi i omega^2)` from the theta
/// quotient `K theta(zeta - a) theta(zeta + a) / theta(zeta)^2`, with `K`
/// fixed by the `1/z^2` pole.
pub fn wp(z: C64) -> Result<C64> {
    check_pole(z)?;
    let a = wp_shift();
    let zeta = reduce(zeta_of_z(z));
    let c = 3.0 / (4.0 * PI * i() * omega());
    let k = -(theta_prime(C64::new(0.0, 0.0)) / theta(a)).powi(2) * c * c;
    Ok(k * theta(zeta - a) * theta(zeta + a) / theta(zeta).powi(2))
}

/// `wp` from the q-expansion for periods `(1, tau)` rescaled to the moiré
/// periods. Independent of the theta functions above.
pub fn wp_series(z: C64) -> Result<C64> {
    check_pole(z)?;
    let (w1, w2) = periods();
    let tau = w2 / w1;
    let u = reduce_tau(z / w1, tau);
    let q = (2.0 * PI * i() * tau).exp();
    let mut s = C64::new(0.0, 0.0);
    let mut qn = C64::new(1.0, 0.0);
    for n in 1..200 {
        qn *= q;
        let term = n as f64 * qn / (1.0 - qn) * (1.0 - (2.0 * PI * n as f64 * u).cos());
        s += term;
        if term.norm() < 1e-18 * s.norm().max(1.0) && n > 5 {
            break;
        }
    }
    let v = PI * PI * (1.0 / (PI * u).sin().powi(2) - 1.0 / 3.0 + 8.0 * s);
    Ok(v / (w1 * w1))
}

fn reduce_tau(u: C64, tau: C64) -> C64 {
    let b = (u.im / tau.im + 0.5).floor();
    let u1 = u - b * tau;
    u1 - (u1.re + 0.5).floor()
}

/// `F_k(r) = exp((k/2)(-i(1+omega) x1 + (omega-1) x2))
///   theta(zeta(r) + k/(sqrt(3) omega)) / theta(zeta(r))`, with `k = k1 + i k2`.
pub fn f_k(r: Vec2, k: Vec2) -> Result<C64> {
    let kc = C64::new(k[0], k[1]);
    let w = omega();
    let zeta = zeta_of(r);
    let den = theta(zeta);
    if den.norm() < 1e-300 || zeta_dist_to_lattice(zeta) * 4.0 * PI / 3.0 < POLE_TOL {
        return Err(FbiError::InvalidInput(format!("F_k has a pole at r = {r:?}")));
    }
    let pre = (kc / 2.0 * (-i() * (1.0 + w) * r[0] + (w - 1.0) * r[1])).exp();
    Ok(pre * theta(zeta + kc / (SQRT3 * w)) / den)
}

fn zeta_dist_to_lattice(zeta: C64) -> f64 {
    let zr = reduce(zeta);
    let w = omega();
    let mut d = f64::INFINITY;
    for a in -1..=1 {
        for b in -1..=1 {
            d = d.min((zr - a as f64 - b as f64 * w).norm());
        }
    }
    d
}

/// The special stacking point `r_S = (4 pi / (3 sqrt 3), 0)`.
pub fn r_s() -> Vec2 {
    [4.0 * PI / (3.0 * SQRT3), 0.0]
}

/// Predicted zero of the TBG flat state at momentum `k`:
/// `(4 pi / (3 sqrt 3)) (k2, -k1)`.
pub fn predicted_zero(k: Vec2) -> Vec2 {
    lattice::scale(4.0 * PI / (3.0 * SQRT3), [k[1], -k[0]])
}

/// Layer values of a state sampled on the shifted grid
/// `r = ((i + 1/2)/n) v1 + ((j + 1/2)/n) v2`, which avoids the lattice.
#[derive(Clone, Debug)]
pub struct Sampled {
    pub n: usize,
    pub n_layers: usize,
    /// `values[p][j]` at point `p = i n + j`.
    pub values: Vec<Vec<C64>>,
}

pub fn sample_point(n: usize, p: usize) -> Vec2 {
    let (a, b) = (p / n, p % n);
    lattice::real_point([(a as f64 + 0.5) / n as f64, (b as f64 + 0.5) / n as f64])
}

impl Sampled {
    pub fn from_fn(n: usize, n_layers: usize, f: impl Fn(Vec2) -> Result<Vec<C64>> + Sync) -> Result<Self> {
        use rayon::prelude::*;
        let values = (0..n * n).into_par_iter().map(|p| f(sample_point(n, p))).collect::<Result<_>>()?;
        Ok(Sampled { n, n_layers, values })
    }

    pub fn from_state(model: &ChiralModel, st: &KState, band: usize, n: usize) -> Self {
        let values = (0..n * n).map(|p| st.eval(model, band, sample_point(n, p))).collect();
        Sampled { n, n_layers: model.n_layers, values }
    }

    /// Discrete `L^2` inner product over the cell.
    pub fn inner(&self, other: &Sampled) -> C64 {
        let w = CELL_AREA / (self.n * self.n) as f64;
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>())
            .sum::<C64>()
            * w
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.sqrt()
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        for v in &mut self.values {
            v.iter_mut().for_each(|z| *z /= n);
        }
        self
    }

    /// `|<a, b>| / (|a| |b|)`.
    pub fn overlap(&self, other: &Sampled) -> f64 {
        self.inner(other).norm() / (self.norm() * other.norm())
    }

    /// Plane-wave coefficients on `basis` (A sublattice), by a discrete
    /// Fourier transform with the layer offsets removed.
    pub fn coefficients(&self, model: &ChiralModel, basis: &PlaneWaveBasis) -> CVec {
        let nn = (self.n * self.n) as f64;
        let scale = CELL_AREA.sqrt() / nn;
        CVec::from_fn(basis.len(), |row, _| {
            let (j, g) = basis.entries[row];
            let p = lattice::add(lattice::recip(g), model.layer_offset(j));
            let mut s = C64::new(0.0, 0.0);
            for (idx, v) in self.values.iter().enumerate() {
                let r = sample_point(self.n, idx);
                s += v[j] * C64::from_polar(1.0, -lattice::dot(p, r));
            }
            s * scale
        })
    }

    /// Grid point with the smallest Euclidean norm of the layer vector.
    pub fn argmin(&self) -> (Vec2, f64) {
        let mut best = (f64::INFINITY, 0);
        for (p, v) in self.values.iter().enumerate() {
            let x = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if x < best.0 {
                best = (x, p);
            }
        }
        (sample_point(self.n, best.1), best.0)
    }
}

/// `|(D(alpha) + k) c| / |c|` for the plane-wave coefficients of `s`.
pub fn operator_residual(model: &ChiralModel, alpha: f64, k: Vec2, cutoff: f64, s: &Sampled) -> Result<f64> {
    let basis = PlaneWaveBasis::new(model, k, cutoff)?;
    let c = s.coefficients(model, &basis);
    let m = dirac_operator(model, &basis, C64::new(alpha, 0.0));
    Ok((m * &c).norm() / c.norm())
}

/// Distance from `r` to the nearest point of `target + Gamma`.
pub fn lattice_distance(r: Vec2, target: Vec2) -> f64 {
    let d = lattice::sub(r, target);
    let s = [lattice::dot(d, lattice::G1) / (2.0 * PI), lattice::dot(d, lattice::G2) / (2.0 * PI)];
    let base = [s[0] - s[0].round(), s[1] - s[1].round()];
    let mut best = f64::INFINITY;
    for a in -1..=1 {
        for b in -1..=1 {
            let p = lattice::real_point([base[0] + a as f64, base[1] + b as f64]);
            best = best.min(lattice::norm(p));
        }
    }
    best
}

/// Diameter of one cell of the sampling grid.
pub fn grid_spacing(n: usize) -> f64 {
    lattice::norm(lattice::add(lattice::V1, lattice::V2)).max(lattice::norm(lattice::sub(lattice::V1, lattice::V2)))
        / n as f64
}

/// `F_k u_0` for a simple magic angle, normalised on the grid.
pub fn closed_form_flatband(model: &ChiralModel, u0: &KState, k: Vec2, n: usize) -> Result<Sampled> {
    Ok(Sampled::from_fn(n, model.n_layers, |r| {
        let f = f_k(r, k)?;
        Ok(u0.eval(model, 0, r).into_iter().map(|z| z * f).collect())
    })?
    .normalized())
}

/// The two `k = 0` states of a two-fold magic angle: `w0` vanishing at the
/// origin and `v0` its orthogonal complement in the flat space.
pub fn split_two_fold(model: &ChiralModel, st: &KState) -> Result<(CVec, CVec)> {
    if st.n_bands() != 2 {
        return Err(FbiError::InvalidInput(format!("expected two flat bands, found {}", st.n_bands())));
    }
    let at0 = CMat::from_fn(model.n_layers, 2, |j, b| st.eval(model, b, [0.0, 0.0])[j]);
    let d = svd(&at0)?;
    let w = d.v.column(0).into_owned();
    let v = CVec::from_vec(vec![-w[1].conj(), w[0].conj()]);
    Ok((w, v))
}

/// Real-space value of `sum_b c_b u_b(r)`.
pub fn combine(model: &ChiralModel, st: &KState, c: &CVec, r: Vec2) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); model.n_layers];
    for b in 0..st.n_bands() {
        for (o, x) in out.iter_mut().zip(st.eval(model, b, r)) {
            *o += c[b] * x;
        }
    }
    out
}

/// TBG-4 states at `k`: `v_k = F_k(r - r_S) v0(r)` and `w_k = F_k(r) w0(r)`,
/// from the flat states at `k = 0`.
pub fn tbg4_oracle(model: &ChiralModel, st0: &KState, k: Vec2, n: usize) -> Result<(Sampled, Sampled)> {
    let (wc, vc) = split_two_fold(model, st0)?;
    let rs = r_s();
    let v = Sampled::from_fn(n, model.n_layers, |r| {
        let f = f_k(lattice::sub(r, rs), k)?;
        Ok(combine(model, st0, &vc, r).into_iter().map(|z| z * f).collect())
    })?;
    let w = Sampled::from_fn(n, model.n_layers, |r| {
        let f = f_k(r, k)?;
        Ok(combine(model, st0, &wc, r).into_iter().map(|z| z * f).collect())
    })?;
    Ok((v.normalized(), w.normalized()))
}

/// Product map of two TBG states to an eTTG state:
/// `(v, w) -> (v1 w1, (v1 w2 + v2 w1)/sqrt 2, v2 w2)`.
pub fn ttg_product(a: &[C64], b: &[C64]) -> Vec<C64> {
    vec![a[0] * b[0], (a[0] * b[1] + a[1] * b[0]) / 2f64.sqrt(), a[1] * b[1]]
}

/// eTTG states at `k` from the TBG state `u0` at a simple magic angle:
/// `v_k = F_k w0` and `w_k = F_{k/2}^2 w0` with `w0 = u0 x u0`.
pub fn ettg4_oracle(tbg: &ChiralModel, u0: &KState, k: Vec2, n: usize) -> Result<(Sampled, Sampled)> {
    let half = lattice::scale(0.5, k);
    let w0 = |r: Vec2| {
        let u = u0.eval(tbg, 0, r);
        ttg_product(&u, &u)
    };
    let v = Sampled::from_fn(n, 3, |r| {
        let f = f_k(r, k)?;
        Ok(w0(r).into_iter().map(|z| z * f).collect())
    })?;
    let w = Sampled::from_fn(n, 3, |r| {
        let f = f_k(r, half)?;
        Ok(w0(r).into_iter().map(|z| z * f * f).collect())
    })?;
    Ok((v.normalized(), w.normalized()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_vanishes_on_lattice() {
        assert!(theta(C64::new(0.0, 0.0)).norm() < 1e-14);
        assert!(theta(omega() + 1.0).norm() < 1e-12);
        assert!(theta(C64::new(0.3, 0.1)).norm() > 1e-3);
    }

    #[test]
    fn wp_pole_rejected() {
        assert!(wp(C64::new(0.0, 0.0)).is_err());
        assert!(wp(periods().0).is_err());
    }
}
