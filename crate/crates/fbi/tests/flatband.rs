use fbi::chiral::*;
use fbi::elliptic::{combine, split_two_fold};
use fbi::flatband::*;
use fbi::io::{dump_basis, load_basis};
use fbi::lattice::{self, rot3, KGrid, CELL_AREA};
use fbi::linalg::{max_abs, singular_values, CMat};
use num_complex::Complex64 as C64;
use std::collections::HashMap;

const A_TBG: f64 = 0.585663558389;
const A_TBG4: f64 = 0.8537989459;
const A_ETTG: f64 = 0.828253347;

fn tbg2(n: usize) -> FlatBandBasis {
    FlatBandBasis::compute(&ChiralModel::tbg(Potential::u0()), A_TBG, 8.0, KGrid::new(n, n).unwrap(), Some(1)).unwrap()
}

fn check_invariants(b: &FlatBandBasis) {
    let m = b.m;
    for st in &b.states {
        for band in 0..2 * m {
            let mut norm = 0.0;
            for &(j, g) in &st.entries {
                let (own, other) = if band < m { (0, 1) } else { (1, 0) };
                norm += st.u_hat(band, own, j, g).norm_sqr();
                assert_eq!(st.u_hat(band, other, j, g), C64::new(0.0, 0.0), "sublattice polarisation");
                // Q pairing: band -n is the conjugate of band n on the other sublattice
                if band < m {
                    let diff = st.u_hat(band + m, 1, j, g) - st.u_hat(band, 0, j, g).conj();
                    assert!(diff.norm() < 1e-10);
                }
            }
            assert!((norm - CELL_AREA).abs() < 1e-9, "normalisation {norm}");
        }
        let v = st.full_vectors();
        let gram = v.adjoint() * &v;
        assert!(max_abs(&(gram - CMat::identity(2 * m, 2 * m))) < 1e-10);
    }
    // truncation leaves singular values of order 1e-6 at the two-fold angles
    let r = b.kernel_residual().unwrap();
    assert!(r < 1e-5, "kernel residual {r}");
}

#[test]
fn tbg2_invariants() {
    check_invariants(&tbg2(4));
}

#[test]
fn tbg4_and_ettg_invariants() {
    let b = FlatBandBasis::compute(&ChiralModel::tbg(Potential::u78()), A_TBG4, 8.0, KGrid::new(3, 3).unwrap(), Some(2)).unwrap();
    check_invariants(&b);
    let e = FlatBandBasis::compute(&ChiralModel::ettg(Potential::u0()), A_ETTG, 8.0, KGrid::new(3, 3).unwrap(), Some(2)).unwrap();
    check_invariants(&e);
    // k = 0 is a crossing point for the equal-twist trilayer
    assert!(e.crossings.contains(&0));
}

#[test]
fn wrong_multiplicity_rejected() {
    let m = ChiralModel::tbg(Potential::u0());
    let r = FlatBandBasis::compute(&m, A_TBG, 8.0, KGrid::new(2, 2).unwrap(), Some(2));
    assert!(r.is_err());
    assert!(FlatBandBasis::compute(&m, 0.5, 8.0, KGrid::new(2, 2).unwrap(), None).is_err());
}

#[test]
fn layer_symmetry_relates_opposite_momenta() {
    let b = tbg2(4);
    let n = b.model.n_layers;
    for k in 0..b.n_k() {
        let p = b.grid.neg(k);
        if p == k {
            continue;
        }
        let holds = |dst: usize, src: usize| {
            let (sd, ss) = (&b.states[dst], &b.states[src]);
            let gs = lattice::to_dual(lattice::add(sd.k, ss.k));
            let gs = [gs[0].round() as i32, gs[1].round() as i32];
            sd.entries.iter().all(|&(j, g)| {
                let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
                let want = ss.amplitude(0, 0, n - 1 - j, [-g[0] - gs[0], -g[1] - gs[1]]) * sign;
                (sd.amplitude(0, 0, j, g) - want).norm() < 1e-12
            })
        };
        assert!(holds(k, p) || holds(p, k), "pair {k}, {p}");
    }
}

#[test]
fn gamma_state_is_reflection_even() {
    let m = ChiralModel::tbg(Potential::u0());
    let st = flat_state(&m, A_TBG, 8.0, [0.0, 0.0], Some(1)).unwrap();
    for s in [[0.1, 0.2], [0.37, -0.21], [0.45, 0.05]] {
        let r = lattice::real_point(s);
        let a: f64 = st.eval(&m, 0, r).iter().map(|z| z.norm_sqr()).sum();
        let b: f64 = st.eval(&m, 0, lattice::scale(-1.0, r)).iter().map(|z| z.norm_sqr()).sum();
        assert!((a - b).abs() < 1e-10 * a.max(1.0));
    }
}

#[test]
fn two_fold_states_carry_different_rotation_characters() {
    let m = ChiralModel::tbg(Potential::u78());
    let st = flat_state(&m, A_TBG4, 8.0, [0.0, 0.0], Some(2)).unwrap();
    let (w, v) = split_two_fold(&m, &st).unwrap();
    let character = |c| {
        let r = [0.4, 0.3];
        let (a, b) = (combine(&m, &st, c, r), combine(&m, &st, c, rot3(r)));
        let x = b[0] / a[0];
        for rr in [[1.1, -0.6], [-0.9, 1.7]] {
            let (a, b) = (combine(&m, &st, c, rr), combine(&m, &st, c, rot3(rr)));
            assert!((b[0] / a[0] - x).norm() < 1e-8 && (b[1] / a[1] - x).norm() < 1e-8);
        }
        x
    };
    let (cw, cv) = (character(&w), character(&v));
    assert!((cw.norm() - 1.0).abs() < 1e-8 && (cv.norm() - 1.0).abs() < 1e-8);
    assert!((cw - cv).norm() > 0.5);
}

/// `|P - P'|` from dense projectors on the union of plane-wave labels.
fn dense_distance(b: &FlatBandBasis, k: usize, kp: usize) -> f64 {
    let d = lattice::min_image(lattice::sub(b.grid.point(kp), b.grid.point(k)));
    let target = lattice::add(b.grid.point(k), d);
    let gs = lattice::to_dual(lattice::sub(target, b.grid.point(kp)));
    let gs = [gs[0].round() as i32, gs[1].round() as i32];
    let mut rows: HashMap<(usize, usize, [i32; 2]), usize> = HashMap::new();
    let mut label = |s: usize, j: usize, g: [i32; 2]| {
        let n = rows.len();
        *rows.entry((s, j, g)).or_insert(n)
    };
    let (a, c) = (&b.states[k], &b.states[kp]);
    let mut ea = Vec::new();
    let mut ec = Vec::new();
    for s in 0..2 {
        for &(j, g) in &a.entries {
            ea.push((label(s, j, g), s, j, g));
        }
        for &(j, g) in &c.entries {
            ec.push((label(s, j, [g[0] - gs[0], g[1] - gs[1]]), s, j, g));
        }
    }
    let n = rows.len();
    let dim = 2 * b.m;
    let mut va = CMat::zeros(n, dim);
    let mut vc = CMat::zeros(n, dim);
    for band in 0..dim {
        for &(row, s, j, g) in &ea {
            va[(row, band)] = a.amplitude(band, s, j, g);
        }
        for &(row, s, j, g) in &ec {
            vc[(row, band)] = c.amplitude(band, s, j, g);
        }
    }
    let diff = &va * va.adjoint() - &vc * vc.adjoint();
    singular_values(&diff).into_iter().fold(0.0, f64::max)
}

#[test]
fn grid_assumption_on_six_by_six() {
    let b = tbg2(6);
    let check = b.check_grid_assumption().unwrap();
    assert!(check.pass && check.max_distance < 1.0);
    let (k, kp) = check.worst_pair;
    let oracle = dense_distance(&b, k, kp);
    assert!((oracle - check.max_distance).abs() < 1e-8, "{oracle} vs {}", check.max_distance);
    assert!((dense_distance(&b, 0, 1) - b.projector_distance(0, 1).unwrap()).abs() < 1e-8);
}

#[test]
fn grid_assumption_trivial_and_coarse() {
    let one = tbg2(1);
    let c = one.check_grid_assumption().unwrap();
    assert!(c.pass && c.max_distance == 0.0);
    let m = ChiralModel::tbg(Potential::u0());
    let coarse = FlatBandBasis::compute(&m, A_TBG, 8.0, KGrid::new(1, 2).unwrap(), Some(1)).unwrap();
    let c = coarse.check_grid_assumption().unwrap();
    assert_eq!(c.worst_pair, (0, 1));
    assert!((c.max_distance - dense_distance(&coarse, 0, 1)).abs() < 1e-8);
}

#[test]
fn crossing_selection_is_continuous() {
    // neighbours straddling the eTTG crossing at k = 0
    let m = ChiralModel::ettg(Potential::u0());
    let at = |t: [f64; 2]| {
        
        flat_state(&m, A_ETTG, 8.0, lattice::from_dual(t), Some(2)).unwrap()
    };
    let s0 = at([0.0, 0.0]);
    for t in [[0.05, 0.0], [-0.05, 0.0], [0.0, 0.05], [0.03, -0.04]] {
        let s1 = at(t);
        let o = fbi::formfactor::overlap_full(&s0, &s1, [0, 0]);
        let smin = singular_values(&o)[0].min(1.0);
        assert!((1.0 - smin * smin).sqrt() < 0.5);
    }
}

#[test]
fn rotation_keeps_the_flat_space() {
    let b = tbg2(2);
    let u = vec![CMat::from_element(1, 1, C64::from_polar(1.0, 0.7)); b.n_k()];
    let r = b.rotate(&u);
    assert!(r.kernel_residual().unwrap() < 1e-7);
    for st in &r.states {
        let v = st.full_vectors();
        assert!(max_abs(&(v.adjoint() * &v - CMat::identity(2, 2))) < 1e-12);
    }
}

#[test]
fn basis_dump_round_trip() {
    let m = ChiralModel::ettg(Potential::u0());
    let b = FlatBandBasis::compute(&m, A_ETTG, 8.0, KGrid::new(2, 2).unwrap(), Some(2)).unwrap();
    let text = dump_basis(&b).unwrap();
    assert!(text.lines().nth(8).unwrap().starts_with("0,1,"));
    let back = load_basis(&text).unwrap();
    assert_eq!(back.model, b.model);
    assert_eq!(back.alpha, b.alpha);
    assert_eq!(back.crossings, b.crossings);
    assert_eq!((back.grid, back.m), (b.grid, b.m));
    for (x, y) in back.states.iter().zip(&b.states) {
        assert_eq!(x.entries, y.entries);
        assert!(max_abs(&(&x.coeffs - &y.coeffs)) < 1e-15);
    }
    let corrupted = text.replacen("# m 2", "# m x", 1);
    assert!(load_basis(&corrupted).is_err());
    let mut lines: Vec<&str> = text.lines().collect();
    lines.truncate(9);
    lines.push("0,-1,0,0,0,0,1,0");
    assert!(load_basis(&lines.join("\n")).is_err());
}
