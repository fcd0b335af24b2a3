use fbi::chiral::*;
use fbi::elliptic::*;
use fbi::flatband::flat_state;
use fbi::lattice::{self, omega, Vec2, Q1};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

const A_TBG: f64 = 0.585663558389;
const A_TBG4: f64 = 0.8537989459;
const A_ETTG: f64 = 0.828253347;

fn i() -> C64 {
    C64::new(0.0, 1.0)
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

/// Jacobi triple product for theta_1 with nome q = exp(i pi omega).
fn theta_product(z: C64) -> C64 {
    let q = (i() * PI * omega()).exp();
    let mut p = 2.0 * (i() * PI * omega() / 4.0).exp() * (PI * z).sin();
    let mut q2n = C64::new(1.0, 0.0);
    for _ in 0..60 {
        q2n *= q * q;
        p *= (1.0 - q2n) * (1.0 - 2.0 * q2n * (2.0 * PI * z).cos() + q2n * q2n);
    }
    p
}

#[test]
fn theta_agrees_with_product_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-0.8..0.8));
        assert!(rel(theta(z), theta_product(z)) < 1e-12);
        let h = 1e-5;
        let fd = (theta(z + h) - theta(z - h)) / (2.0 * h);
        assert!(rel(theta_prime(z), fd) < 1e-8);
    }
}

#[test]
fn theta_quasi_periodicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w = omega();
    for _ in 0..100 {
        let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-0.8..0.8));
        let t = theta(z);
        assert!(rel(theta(z + 1.0), -t) < 1e-12);
        let expect = -(-i() * PI * w - 2.0 * i() * PI * z).exp() * t;
        assert!(rel(theta(z + w), expect) < 1e-12);
    }
}

#[test]
fn wp_symmetries_and_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (p1, p2) = periods();
    let w = omega();
    for _ in 0..100 {
        let z = C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let v = wp(z).unwrap();
        assert!(rel(wp(w * z).unwrap(), w * v) < 1e-10);
        assert!(rel(wp(z + p1).unwrap(), v) < 1e-10);
        assert!(rel(wp(z + p2).unwrap(), v) < 1e-10);
        assert!(rel(wp_series(z).unwrap(), v) < 1e-10);
    }
}

#[test]
fn wp_solves_equianharmonic_equation() {
    // g2 = 0 on the hexagonal lattice, so wp'^2 - 4 wp^3 is a constant
    let h = 1e-5;
    let invariant = |z: C64| {
        let d = (wp(z + h).unwrap() - wp(z - h).unwrap()) / (2.0 * h);
        d * d - 4.0 * wp(z).unwrap().powi(3)
    };
    let g3 = -invariant(C64::new(0.4, 0.3));
    for z in [C64::new(1.1, -0.2), C64::new(-0.7, 0.9), C64::new(0.2, 1.6)] {
        assert!(rel(-invariant(z), g3) < 1e-5);
    }
    // double pole with unit coefficient
    let z = C64::new(1e-3, 2e-3);
    assert!(rel(wp(z).unwrap() * z * z, C64::new(1.0, 0.0)) < 1e-5);
}

#[test]
fn poles_are_reported() {
    let (p1, _) = periods();
    assert!(wp(C64::new(0.0, 0.0)).is_err());
    assert!(wp(p1).is_err());
    assert!(wp_series(p1).is_err());
    assert!(f_k([0.0, 0.0], [0.2, 0.1]).is_err());
}

#[test]
fn f_k_is_cell_periodic() {
    // the momentum sits in the prefactor convention, so F_k itself repeats
    // from cell to cell
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let k = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let r = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let f = f_k(r, k).unwrap();
        for v in [lattice::V1, lattice::V2] {
            assert!(rel(f_k(lattice::add(r, v), k).unwrap(), f) < 1e-10);
        }
    }
}

#[test]
fn tbg_closed_form_matches_numerics() {
    let model = ChiralModel::tbg(Potential::u0());
    let u0 = flat_state(&model, A_TBG, 8.0, [0.0, 0.0], Some(1)).unwrap();
    let n = 64;
    for kd in [[0.3, -0.2], [0.11, 0.42]] {
        let k = lattice::from_dual(kd);
        let cf = closed_form_flatband(&model, &u0, k, n).unwrap();
        let num = Sampled::from_state(&model, &flat_state(&model, A_TBG, 8.0, k, Some(1)).unwrap(), 0, n);
        assert!(cf.overlap(&num) > 1.0 - 1e-6, "{}", cf.overlap(&num));
        assert!(operator_residual(&model, A_TBG, k, 8.0, &cf).unwrap() < 1e-6);
        let (zero, _) = cf.argmin();
        assert!(lattice_distance(zero, predicted_zero(k)) < grid_spacing(n));
    }
}

fn in_span_defect(model: &ChiralModel, alpha: f64, k: Vec2, x: &Sampled) -> f64 {
    let st = flat_state(model, alpha, 12.0, k, Some(2)).unwrap();
    let captured: f64 = (0..2).map(|b| Sampled::from_state(model, &st, b, x.n).inner(x).norm_sqr()).sum();
    (1.0 - captured / x.inner(x).re).abs()
}

#[test]
fn tbg4_states_from_theta_functions() {
    let model = ChiralModel::tbg(Potential::u78());
    let st0 = flat_state(&model, A_TBG4, 12.0, [0.0, 0.0], Some(2)).unwrap();
    let k = Q1;
    let (v, w) = tbg4_oracle(&model, &st0, k, 64).unwrap();
    for x in [&v, &w] {
        assert!(in_span_defect(&model, A_TBG4, k, x) < 1e-9);
        assert!(operator_residual(&model, A_TBG4, k, 12.0, x).unwrap() < 1e-4);
    }
    assert!(w.inner(&v).norm() < 1e-8);
}

#[test]
fn ettg_states_from_tbg_product() {
    let tbg = ChiralModel::tbg(Potential::u0());
    let ettg = ChiralModel::ettg(Potential::u0());
    let a_tbg = A_ETTG / 2f64.sqrt();
    let u0 = flat_state(&tbg, a_tbg, 12.0, [0.0, 0.0], Some(1)).unwrap();
    let k = Q1;
    let (v, w) = ettg4_oracle(&tbg, &u0, k, 64).unwrap();
    for x in [&v, &w] {
        assert!(in_span_defect(&ettg, A_ETTG, k, x) < 1e-6);
        assert!(operator_residual(&ettg, A_ETTG, k, 12.0, x).unwrap() < 1e-3);
    }
    let gram = (v.inner(&w).norm() / (v.norm() * w.norm())).powi(2);
    assert!(1.0 - gram > 0.1, "independence {}", 1.0 - gram);
}
