use fbi::lattice::*;
use proptest::prelude::*;
use std::f64::consts::PI;

#[test]
fn cell_area_and_q_vectors() {
    let cross = V1[0] * V2[1] - V1[1] * V2[0];
    assert!((cross.abs() - CELL_AREA).abs() < 1e-12);
    for q in [Q1, Q2, Q3] {
        assert!((norm(q) - 1.0).abs() < 1e-15);
    }
    // the three q_j sum to zero and are related by rotation
    assert!(norm(add(add(Q1, Q2), Q3)) < 1e-15);
    assert!(norm(sub(rot3(Q1), Q2)) < 1e-15);
    assert!((norm(G1) - SQRT3).abs() < 1e-15);
}

#[test]
fn fold_of_q1_on_three_by_three() {
    let grid = KGrid::new(3, 3).unwrap();
    let (k, g) = grid.fold(Q1).unwrap();
    let back = add(grid.point(k), recip(g));
    assert!(norm(sub(back, Q1)) < 1e-12);
    assert_eq!(grid.dual(k), [2.0 / 3.0, 2.0 / 3.0]);
    assert_eq!(g, [-1, -1]);
}

#[test]
fn rejects_bad_grids_and_off_grid_points() {
    assert!(KGrid::new(0, 3).is_err());
    let grid = KGrid::new(4, 4).unwrap();
    assert!(grid.fold(from_dual([0.1, 0.0])).is_err());
}

#[test]
fn one_point_grid_has_no_neighbours() {
    let grid = KGrid::new(1, 1).unwrap();
    assert!(grid.neighbours(0).is_empty());
    assert_eq!(KGrid::new(1, 2).unwrap().neighbours(0), vec![1]);
}

#[test]
fn min_image_is_shortest() {
    for t in [[0.5, 0.0], [0.7, 0.3], [-0.4, 0.9], [2.2, -1.6]] {
        let p = from_dual(t);
        let m = min_image(p);
        let d = to_dual(sub(p, m));
        assert!((d[0] - d[0].round()).abs() < 1e-12 && (d[1] - d[1].round()).abs() < 1e-12);
        for a in -2..=2 {
            for b in -2..=2 {
                assert!(norm(m) <= norm(add(m, recip([a, b]))) + 1e-12);
            }
        }
    }
}

proptest! {
    #[test]
    fn duality_roundtrip(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let p = [a, b];
        let back = from_dual(to_dual(p));
        prop_assert!(norm(sub(back, p)) < 1e-12);
        let r = real_point([a, b]);
        // s_i = r . g_i / (2 pi)
        prop_assert!((dot(r, G1) / (2.0 * PI) - a).abs() < 1e-12);
        prop_assert!((dot(r, G2) / (2.0 * PI) - b).abs() < 1e-12);
    }

    #[test]
    fn fold_roundtrip_and_idempotent(nx in 1usize..7, ny in 1usize..7, i in 0i64..40, j in 0i64..40, gi in -3i32..3, gj in -3i32..3) {
        let grid = KGrid::new(nx, ny).unwrap();
        let t = [(i as f64 - 20.0) / nx as f64, (j as f64 - 20.0) / ny as f64];
        let p = add(from_dual(t), recip([gi, gj]));
        let (k, g) = grid.fold(p).unwrap();
        prop_assert!(norm(sub(add(grid.point(k), recip(g)), p)) < 1e-10);
        let (k2, g2) = grid.fold(grid.point(k)).unwrap();
        prop_assert_eq!(k2, k);
        prop_assert_eq!(g2, [0, 0]);
    }

    #[test]
    fn grid_closure(nx in 1usize..7, ny in 1usize..7, a in 0usize..49, b in 0usize..49) {
        let grid = KGrid::new(nx, ny).unwrap();
        let (k, q) = (a % grid.len(), b % grid.len());
        let (kq, g) = grid.add_idx(k, q);
        let sum = add(grid.point(k), grid.point(q));
        prop_assert!(norm(sub(add(grid.point(kq), recip(g)), sum)) < 1e-10);
        let n = grid.neg(k);
        let (z, _) = grid.add_idx(k, n);
        prop_assert_eq!(z, 0);
        prop_assert_eq!(grid.neg(n), k);
        for nb in grid.neighbours(k) {
            prop_assert!(grid.neighbours(nb).contains(&k));
        }
    }
}
