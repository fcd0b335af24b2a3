//! Magic angles as reciprocals of the spectrum of the Birman-Schwinger
//! operator `T_k = (D(0) + k)^{-1} W`.
//!
//! `D(alpha) + k = (D(0) + k)(1 + alpha T_k)` is singular exactly when
//! `alpha = -1/lambda` for an eigenvalue `lambda` of `T_k`. Candidates are
//! refined by Newton steps on the smallest singular triplet and classified by
//! the dimension of the numerical kernel.

use crate::chiral::{coupling_matrix, dirac_diagonal, dirac_operator, ChiralModel, PlaneWaveBasis};
use crate::error::{FbiError, Result};
use crate::lattice::{self, Vec2};
use crate::linalg::{eigvals, singular_values, CMat, CVec, LuPair};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

pub const DETECT_TOL: f64 = 1e-7;
pub const DEDUP_TOL: f64 = 1e-5;
pub const FLAT_TOL: f64 = 1e-6;
pub const CLUSTER_TOL: f64 = 2e-3;
pub const DEFAULT_K_PROBE: Vec2 = [0.1, 0.2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagicAngle {
    pub alpha: C64,
    pub multiplicity: usize,
    /// Smallest singular value of `D(alpha) + k` at the probe point.
    pub residual: f64,
    /// Lowest few singular values, for diagnostics.
    pub singular_values: Vec<f64>,
}

impl MagicAngle {
    pub fn is_real(&self, tol: f64) -> bool {
        self.alpha.im.abs() <= tol * self.alpha.norm().max(1.0)
    }
}

/// Birman-Schwinger operator at the probe momentum `k` (Cartesian).
pub fn birman_schwinger(model: &ChiralModel, k: Vec2, cutoff: f64) -> Result<CMat> {
    let basis = PlaneWaveBasis::new(model, k, cutoff)?;
    let d = dirac_diagonal(model, &basis);
    if let Some(i) = d.iter().position(|z| z.norm() < 1e-12) {
        return Err(FbiError::InvalidInput(format!(
            "probe momentum hits a protected zero (basis entry {i}); choose a generic k_probe"
        )));
    }
    let mut t = coupling_matrix(model, &basis);
    for (i, di) in d.iter().enumerate() {
        let inv = di.inv();
        t.row_mut(i).iter_mut().for_each(|z| *z *= inv);
    }
    Ok(t)
}

/// All candidate `alpha = -1/lambda`, sorted by modulus.
pub fn raw_candidates(model: &ChiralModel, k: Vec2, cutoff: f64) -> Result<Vec<C64>> {
    let t = birman_schwinger(model, k, cutoff)?;
    let scale = t.iter().fold(0.0f64, |a, z| a.max(z.norm())).max(1.0);
    let mut out: Vec<C64> = eigvals(&t)?
        .into_iter()
        .filter(|l| l.norm() > 1e-10 * scale)
        .map(|l| -l.inv())
        .collect();
    out.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.re.total_cmp(&b.re)));
    Ok(out)
}

/// Candidates with duplicates closer than `DEDUP_TOL` removed.
pub fn candidates(model: &ChiralModel, k: Vec2, cutoff: f64) -> Result<Vec<C64>> {
    let mut dedup: Vec<C64> = Vec::new();
    for a in raw_candidates(model, k, cutoff)? {
        if dedup.iter().all(|b| (a - b).norm() > DEDUP_TOL) {
            dedup.push(a);
        }
    }
    Ok(dedup)
}

/// Group candidates split apart by basis truncation. Single linkage with
/// radius `CLUSTER_TOL * max(1, |alpha|)`.
pub fn cluster(cands: &[C64]) -> Vec<Vec<C64>> {
    let mut groups: Vec<Vec<C64>> = Vec::new();
    for &a in cands {
        let r = CLUSTER_TOL * a.norm().max(1.0);
        match groups.iter_mut().find(|g| g.iter().any(|b| (a - b).norm() < r)) {
            Some(g) => g.push(a),
            None => groups.push(vec![a]),
        }
    }
    groups
}

/// Smallest singular pair `(u, v)` of `m` by inverse iteration on one LU
/// factorisation. Returns `None` when the matrix is singular to working
/// precision.
fn smallest_pair(m: &CMat) -> Option<(CVec, CVec)> {
    let n = m.nrows();
    let lu = LuPair::new(m);
    let finite = |x: &CVec| x.iter().all(|z| z.re.is_finite() && z.im.is_finite());
    let mut v = CVec::from_fn(n, |i, _| C64::new(1.0 + (i % 7) as f64 * 0.1, (i % 3) as f64 * 0.2));
    v /= C64::new(v.norm(), 0.0);
    let mut u = v.clone();
    for _ in 0..4 {
        let y = lu.solve_adjoint(&v);
        let z = lu.solve(&y);
        let (ny, nz) = (y.norm(), z.norm());
        if !finite(&z) || !finite(&y) || nz == 0.0 || !nz.is_finite() {
            return None;
        }
        u = y / C64::new(ny, 0.0);
        v = z / C64::new(nz, 0.0);
    }
    let y = lu.solve_adjoint(&v);
    let ny = y.norm();
    if finite(&y) && ny.is_finite() && ny > 0.0 {
        u = y / C64::new(ny, 0.0);
    }
    Some((u, v))
}

/// Kernel dimension: singular values below the flat tolerance.
pub fn kernel_dimension(s: &[f64]) -> usize {
    s.iter().take_while(|&&x| x < FLAT_TOL).count()
}

/// Newton iteration on `u^H (D(alpha)+k) v = 0` with `(u, v)` the smallest
/// singular pair, then kernel dimension at the refined value.
pub fn refine(model: &ChiralModel, k: Vec2, cutoff: f64, alpha0: C64) -> Result<MagicAngle> {
    let basis = PlaneWaveBasis::new(model, k, cutoff)?;
    let w = coupling_matrix(model, &basis);
    let mut alpha = alpha0;
    let mut last = f64::INFINITY;
    for _ in 0..40 {
        let m = dirac_operator(model, &basis, alpha);
        let Some((u, v)) = smallest_pair(&m) else { break };
        let num = u.dotc(&(&m * &v));
        let den = u.dotc(&(&w * &v));
        if den.norm() < 1e-300 {
            break;
        }
        let step = num / den;
        if !step.re.is_finite() || !step.im.is_finite() {
            break;
        }
        alpha -= step;
        let sn = step.norm();
        if sn < 1e-14 * alpha.norm().max(1.0) || sn >= last {
            break;
        }
        last = sn;
    }
    let m = dirac_operator(model, &basis, alpha);
    let s = singular_values(&m);
    Ok(MagicAngle {
        alpha,
        multiplicity: kernel_dimension(&s),
        residual: s[0],
        singular_values: s.into_iter().take(8).collect(),
    })
}

/// Magic angles at the probe point (dual coordinates), up to `n_max` of them.
///
/// A cluster with a single member is reported at its Newton-refined value.
/// Larger clusters come from a degenerate eigenvalue split by truncation and
/// are reported at their centroid, which is far less sensitive to the
/// splitting; their multiplicity is the largest kernel dimension found at the
/// refined members.
pub fn magic_angles(
    model: &ChiralModel,
    cutoff: f64,
    k_probe_dual: Vec2,
    n_max: usize,
    real_only: bool,
) -> Result<Vec<MagicAngle>> {
    let k = lattice::from_dual(k_probe_dual);
    let groups = cluster(&raw_candidates(model, k, cutoff)?);
    let mut out: Vec<MagicAngle> = Vec::new();
    for g in groups {
        if out.len() >= n_max {
            break;
        }
        let centroid = g.iter().sum::<C64>() / g.len() as f64;
        if real_only && (centroid.re <= 0.0 || centroid.im.abs() > CLUSTER_TOL * centroid.norm()) {
            continue;
        }
        let mut reps: Vec<C64> = Vec::new();
        for &a in &g {
            if reps.iter().all(|b| (a - b).norm() > DEDUP_TOL) {
                reps.push(a);
            }
        }
        let mut best: Option<MagicAngle> = None;
        for &a in reps.iter().take(8) {
            let r = refine(model, k, cutoff, a)?;
            best = match best {
                Some(b) if b.multiplicity > r.multiplicity
                    || (b.multiplicity == r.multiplicity && b.residual <= r.residual) => Some(b),
                _ => Some(r),
            };
        }
        let Some(mut r) = best else { continue };
        if r.multiplicity == 0 {
            continue;
        }
        if g.len() > 1 {
            r.alpha = centroid;
        }
        if real_only {
            r.alpha.im = 0.0;
        }
        out.push(r);
    }
    Ok(out)
}
