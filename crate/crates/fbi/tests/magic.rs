use fbi::chiral::*;
use fbi::lattice::{from_dual, to_dual, Q1};
use fbi::linalg::singular_values;
use fbi::magic::*;
use num_complex::Complex64 as C64;

fn sigma_min(m: &ChiralModel, k: [f64; 2], alpha: f64) -> f64 {
    let b = PlaneWaveBasis::new(m, k, 8.0).unwrap();
    singular_values(&dirac_operator(m, &b, C64::new(alpha, 0.0)))[0]
}

/// Golden-section minimisation of the smallest singular value, a path that
/// never touches the Birman-Schwinger operator.
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

#[test]
fn first_tbg_magic_angle_is_simple() {
    let m = ChiralModel::tbg(Potential::u0());
    let found = magic_angles(&m, 8.0, DEFAULT_K_PROBE, 1, true).unwrap();
    let k = from_dual(DEFAULT_K_PROBE);
    let oracle = golden_min(|a| sigma_min(&m, k, a), 0.55, 0.62);
    assert!((found[0].alpha.re - oracle).abs() < 1e-7, "{} vs {oracle}", found[0].alpha.re);
    assert_eq!(found[0].multiplicity, 1);
    assert!((found[0].alpha.re - 0.5857).abs() < 1e-3);
}

#[test]
fn u78_magic_angle_is_two_fold() {
    let m = ChiralModel::tbg(Potential::u78());
    let found = magic_angles(&m, 8.0, DEFAULT_K_PROBE, 1, true).unwrap();
    assert_eq!(found[0].multiplicity, 2);
    assert!((found[0].alpha.re - 0.853799).abs() < 5e-4);
    let s = singular_values(&dirac_operator(&m, &PlaneWaveBasis::new(&m, from_dual(DEFAULT_K_PROBE), 8.0).unwrap(), found[0].alpha));
    assert!(s[1] < 1e-5 && s[2] > 0.05);
}

#[test]
fn candidates_do_not_depend_on_the_probe() {
    let m = ChiralModel::tbg(Potential::u0());
    // higher angles need larger cutoffs before they settle
    let a = magic_angles(&m, 12.0, [0.1, 0.2], 2, true).unwrap();
    let b = magic_angles(&m, 12.0, [0.27, -0.13], 2, true).unwrap();
    assert_eq!(a.len(), 2);
    for (x, y) in a.iter().zip(&b) {
        assert!((x.alpha - y.alpha).norm() < 1e-6, "{} vs {}", x.alpha, y.alpha);
    }
}

#[test]
fn refined_value_is_stationary() {
    let m = ChiralModel::tbg(Potential::u0());
    let k = from_dual(DEFAULT_K_PROBE);
    let r = refine(&m, k, 8.0, C64::new(0.587, 0.0)).unwrap();
    assert!(r.residual < 1e-8);
    for d in [-1e-3, 1e-3] {
        assert!(sigma_min(&m, k, r.alpha.re + d) > 10.0 * r.residual);
    }
    assert_eq!(r.multiplicity, 1);
}

#[test]
fn ettg_angles_are_scaled_tbg_angles() {
    let tbg = magic_angles(&ChiralModel::tbg(Potential::u0()), 8.0, DEFAULT_K_PROBE, 1, true).unwrap();
    let ettg = magic_angles(&ChiralModel::ettg(Potential::u0()), 8.0, DEFAULT_K_PROBE, 1, true).unwrap();
    assert!((ettg[0].alpha.re - 2f64.sqrt() * tbg[0].alpha.re).abs() < 1e-3);
    assert!(ettg[0].multiplicity >= 2);
}

#[test]
fn seven_layers_near_0_6922() {
    let m = ChiralModel::new(7, Potential::u0()).unwrap();
    let r = refine(&m, from_dual(DEFAULT_K_PROBE), 8.0, C64::new(0.6922, 0.0)).unwrap();
    assert!((r.alpha.re - 0.6922).abs() < 1e-4);
    assert_eq!(r.multiplicity, 2);
}

#[test]
fn protected_probe_rejected() {
    let m = ChiralModel::tbg(Potential::u0());
    assert!(birman_schwinger(&m, Q1, 8.0).is_err());
    assert!(magic_angles(&m, 8.0, to_dual(Q1), 1, true).is_err());
}

#[test]
fn clustering_merges_split_pairs() {
    let c = |x: f64| C64::new(x, 0.0);
    let groups = cluster(&[c(0.8538), c(0.8539), c(1.5)]);
    assert_eq!(groups.len(), 2);
    assert_eq!(groups[0].len(), 2);
}
