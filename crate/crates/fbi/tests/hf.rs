use fbi::chiral::*;
use fbi::flatband::FlatBandBasis;
use fbi::formfactor::FormFactorTable;
use fbi::hf::*;
use fbi::lattice::{KGrid, CELL_AREA, SQRT3};
use fbi::linalg::{max_abs, CMat};
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::OnceLock;

const A_TBG: f64 = 0.585663558389;
const A_TBG4: f64 = 0.8537989459;

fn table(pot: Potential, alpha: f64, n: usize, m: usize, g_cut: f64) -> FormFactorTable {
    let b = FlatBandBasis::compute(&ChiralModel::tbg(pot), alpha, 8.0, KGrid::new(n, n).unwrap(), Some(m)).unwrap();
    FormFactorTable::compute(&b, g_cut).unwrap()
}

fn tbg2_3x3() -> &'static FormFactorTable {
    static T: OnceLock<FormFactorTable> = OnceLock::new();
    T.get_or_init(|| table(Potential::u0(), A_TBG, 3, 1, 4.0 * SQRT3))
}

fn tbg4_2x2() -> &'static FormFactorTable {
    static T: OnceLock<FormFactorTable> = OnceLock::new();
    T.get_or_init(|| table(Potential::u78(), A_TBG4, 2, 2, 4.0 * SQRT3))
}

#[test]
fn screened_coulomb() {
    let v = Interaction::default();
    assert!((v.v([0.0, 0.0]) - PI).abs() < 1e-15);
    let w = Interaction { eps: 2.0, d: 3.0 };
    assert!((w.v([0.0, 0.0]) - 1.5 * PI).abs() < 1e-15);
    assert!((w.v([1e-7, 0.0]) - 1.5 * PI).abs() < 1e-9);
    assert!(v.v([1.0, 0.0]) > v.v([2.0, 0.0]));
    assert!((v.v([0.0, 40.0]) - 2.0 * PI / 40.0).abs() < 1e-12);
    // radial
    assert!((v.v([0.6, 0.8]) - v.v([1.0, 0.0])).abs() < 1e-15);
}

#[test]
fn fsd_energies_vanish() {
    for t in [tbg2_3x3(), tbg4_2x2()] {
        let int = Interaction::default();
        for sign in [1, -1] {
            let e = energies(t, &int, &fsd(t.n_k(), t.m, sign));
            assert!(e.j.abs() < 1e-9);
            assert!(e.total.abs() < 1e-9);
        }
    }
}

#[test]
fn fock_forms_agree_on_random_states() {
    let int = Interaction::default();
    for t in [tbg2_3x3(), tbg4_2x2()] {
        for seed in 0..20 {
            let p = random_density(t.n_k(), t.m, seed);
            let (a, b) = (fock(t, &int, &p), fock_cs(t, &int, &p).unwrap());
            assert!((a - b).abs() < 1e-9, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn hartree_forms_agree_and_are_nonnegative() {
    let int = Interaction { eps: 1.3, d: 0.7 };
    for t in [tbg2_3x3(), tbg4_2x2()] {
        for seed in 0..200u64 {
            let p = random_density(t.n_k(), t.m, 1000 + seed);
            let j = hartree(t, &int, &p);
            assert!(j >= 0.0);
            if seed < 10 {
                assert!((j - hartree_double(t, &int, &p)).abs() < 1e-10 * j.max(1.0));
            }
        }
    }
}

#[test]
fn fsd_minimises_over_cs_perturbations() {
    let int = Interaction::default();
    for t in [tbg2_3x3(), tbg4_2x2()] {
        for seed in 0..500u64 {
            let amp = [0.05, 0.5, PI][seed as usize % 3];
            let p = cs_perturbation(t.n_k(), t.m, amp, seed);
            assert!(energies(t, &int, &p).total > -1e-10, "seed {seed}");
        }
    }
}

#[test]
fn flipping_one_momentum_raises_fock() {
    let t = tbg2_3x3();
    let int = Interaction::default();
    let base = fsd(t.n_k(), 1, 1);
    let k0 = fock(t, &int, &base);
    for k in 0..t.n_k() {
        let mut p = base.clone();
        p[k] = fsd(1, 1, -1).remove(0);
        assert!(fock(t, &int, &p) > k0 + 1e-6);
    }
}

#[test]
fn cs_decomposition() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for m in 1..=3 {
        for _ in 0..20 {
            let p = random_projector(m, &mut rng);
            let cs = cs_decompose(&p, m).unwrap();
            assert!(max_abs(&(cs.projector() - &p)) < 1e-10);
            assert!(cs.theta.windows(2).all(|w| w[0] <= w[1]));
            assert!(cs.theta.iter().all(|&x| (0.0..=PI + 1e-12).contains(&x)));
            for u in [&cs.u1, &cs.u2, &cs.v] {
                assert!(max_abs(&(u.adjoint() * u - CMat::identity(m, m))) < 1e-10);
            }
        }
        let plus = cs_decompose(&fsd(1, m, 1)[0], m).unwrap();
        assert!(plus.theta.iter().all(|&x| x.abs() < 1e-7));
        let minus = cs_decompose(&fsd(1, m, -1)[0], m).unwrap();
        assert!(minus.theta.iter().all(|&x| (x - PI).abs() < 1e-7));
        assert!(max_abs(&(minus.projector() - &fsd(1, m, -1)[0])) < 1e-10);
    }
    assert!(cs_decompose(&CMat::identity(2, 2), 1).is_err());
}

#[test]
fn charge_gap_positive() {
    let int = Interaction::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for t in [tbg2_3x3(), tbg4_2x2()] {
        for _ in 0..10 {
            let mut c: Vec<Vec<C64>> = (0..t.n_k()).map(|_| (0..t.m).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect()).collect();
            let n: f64 = c.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            c.iter_mut().flatten().for_each(|z| *z /= n);
            for sign in [1, -1] {
                for add in [false, true] {
                    assert!(charge_gap(t, &int, sign, add, &c).unwrap() > 0.0);
                }
            }
        }
    }
}

#[test]
fn charge_gap_single_term() {
    // one momentum and a shell holding only q' = 0: Lambda_k(0) = I
    let t = table(Potential::u0(), A_TBG, 1, 1, 0.5);
    assert_eq!(t.shells[0], vec![[0, 0]]);
    let int = Interaction { eps: 2.0, d: 1.0 };
    let c = vec![vec![C64::new(0.0, 1.0)]];
    let want = int.v([0.0, 0.0]) / CELL_AREA;
    for add in [false, true] {
        assert!((charge_gap(&t, &int, 1, add, &c).unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn charge_gap_validates_input() {
    let t = tbg2_3x3();
    let int = Interaction::default();
    assert!(charge_gap(t, &int, 1, true, &[vec![C64::new(1.0, 0.0)]]).is_err());
    let c = vec![vec![C64::new(1.0, 0.0)]; t.n_k()];
    assert!(charge_gap(t, &int, 1, true, &c).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn random_projectors_are_valid(seed in 0u64..10_000, m in 1usize..4) {
        let p = random_density(2, m, seed);
        for x in &p {
            prop_assert!(max_abs(&(x * x - x)) < 1e-12);
            prop_assert!(max_abs(&(x - x.adjoint())) < 1e-12);
            prop_assert!((x.trace().re - m as f64).abs() < 1e-12);
        }
    }
}
