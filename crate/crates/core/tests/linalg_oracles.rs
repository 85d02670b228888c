//! Linear algebra against independent oracles: explicit-inverse solves and
//! naive triple-loop Gram products.

mod support;

use admm_mimo::linalg::{gram_plus_ridge, norm_inf, solve_spd, Matrix};
use admm_mimo::rng::RngStream;
use rand::Rng;
use support::{gram_ridge_triple_loop, random_spd, solve_via_inverse};

#[test]
fn gram_matches_triple_loop_oracle() {
    for trial in 0..50 {
        let stream = RngStream::new(101, trial);
        let mut rng = stream.substream(9).rng();
        let rows = rng.gen_range(2..9);
        let cols = rng.gen_range(1..rows);
        let h = support::random_matrix(rows, cols, stream);
        let rho = rng.gen_range(0.1..2.0);
        let fast = gram_plus_ridge(&h, rho).unwrap();
        let slow = gram_ridge_triple_loop(&h, rho);
        for i in 0..cols {
            for j in 0..cols {
                assert!(
                    (fast.get(i, j) - slow.get(i, j)).abs() <= 1e-12,
                    "trial {trial} entry ({i},{j})"
                );
            }
        }
    }
}

#[test]
fn gram_is_exactly_symmetric() {
    for trial in 0..20 {
        let h = support::random_matrix(7, 5, RngStream::new(55, trial));
        let g = gram_plus_ridge(&h, 0.7).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(g.get(i, j).to_bits(), g.get(j, i).to_bits());
            }
        }
    }
}

#[test]
fn solve_spd_matches_gauss_jordan_oracle() {
    let mut rng = RngStream::new(77, 0).rng();
    for trial in 0..200 {
        let n = rng.gen_range(1..=12);
        let a = random_spd(n, RngStream::new(78, trial));
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let x = solve_spd(&a, &b).unwrap();
        let x_oracle = solve_via_inverse(&a, &b);
        for i in 0..n {
            assert!(
                (x[i] - x_oracle[i]).abs() <= 1e-9,
                "trial {trial}: {} vs {}",
                x[i],
                x_oracle[i]
            );
        }
    }
}

#[test]
fn solve_residual_bound_holds() {
    // ‖Ax − b‖inf <= 1e-9 (1 + ‖b‖inf) over random conforming systems.
    let mut rng = RngStream::new(31, 0).rng();
    for trial in 0..200 {
        let n = rng.gen_range(1..=16);
        let a = random_spd(n, RngStream::new(32, trial));
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let x = solve_spd(&a, &b).unwrap();
        let ax = a.matvec(&x);
        let r: Vec<f64> = ax.iter().zip(b.iter()).map(|(p, q)| p - q).collect();
        assert!(norm_inf(&r) <= 1e-9 * (1.0 + norm_inf(&b)), "trial {trial}");
    }
}

#[test]
fn random_gram_example_shape_4x3() {
    let h = support::random_matrix(4, 3, RngStream::new(5, 5));
    let g = gram_plus_ridge(&h, 0.7).unwrap();
    let oracle = gram_ridge_triple_loop(&h, 0.7);
    for i in 0..3 {
        for j in 0..3 {
            assert!((g.get(i, j) - oracle.get(i, j)).abs() <= 1e-12);
        }
    }
    // And the ridge actually sits on the diagonal.
    let g0 = gram_ridge_triple_loop(&h, 0.0);
    for i in 0..3 {
        assert!((g.get(i, i) - g0.get(i, i) - 0.7).abs() <= 1e-12);
    }
}

#[test]
fn identity_solves_are_exact() {
    let a = Matrix::identity(6);
    let b = vec![1.0, -2.0, 3.5, 0.0, -0.25, 9.0];
    assert_eq!(solve_spd(&a, &b).unwrap(), b);
}
