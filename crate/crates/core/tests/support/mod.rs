//! Shared test oracles, independent of the library's solve/backprop paths:
//! Gauss-Jordan explicit inverse, naive triple-loop products, exhaustive
//! maximum-likelihood search, and random problem generators.

use admm_mimo::linalg::{Matrix, Vector};
use admm_mimo::rng::RngStream;
use rand::Rng;

/// Explicit inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut m = vec![vec![0.0; 2 * n]; n];
    for r in 0..n {
        for c in 0..n {
            m[r][c] = a.get(r, c);
        }
        m[r][n + r] = 1.0;
    }
    for col in 0..n {
        let (pivot, maxval) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if maxval == 0.0 {
            return None;
        }
        m.swap(col, pivot);
        let d = m[col][col];
        for c in 0..2 * n {
            m[col][c] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    let mut inv = Matrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            inv.set(r, c, m[r][n + c]);
        }
    }
    Some(inv)
}

/// Solves `A x = b` through the explicit inverse.
pub fn solve_via_inverse(a: &Matrix, b: &[f64]) -> Vector {
    gauss_jordan_inverse(a).expect("oracle matrix invertible").matvec(b)
}

/// `HᵀH + rho I` by the naive triple loop (no symmetry tricks).
pub fn gram_ridge_triple_loop(h: &Matrix, rho: f64) -> Matrix {
    let k = h.cols();
    let mut g = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let mut s = 0.0;
            for r in 0..h.rows() {
                s += h.get(r, i) * h.get(r, j);
            }
            if i == j {
                s += rho;
            }
            g.set(i, j, s);
        }
    }
    g
}

/// Uniform random matrix with entries in `[-1, 1]`.
pub fn random_matrix(rows: usize, cols: usize, stream: RngStream) -> Matrix {
    let mut rng = stream.rng();
    Matrix::new(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
}

/// Random SPD matrix `GᵀG + I`.
pub fn random_spd(n: usize, stream: RngStream) -> Matrix {
    let g = random_matrix(n, n, stream);
    let mut a = gram_ridge_triple_loop(&g, 1.0);
    // Mirror to kill the asymmetry of the triple loop's rounding.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = a.get(i, j);
            a.set(j, i, v);
        }
    }
    a
}

/// Exhaustive maximum-likelihood search over the full grid; only viable for
/// `K <= 4` and `q <= 2`.
pub fn ml_exhaustive(y: &[f64], h: &Matrix, q: u32) -> Vector {
    let k = h.cols();
    let levels: Vec<f64> = {
        let max = (1i64 << q) - 1;
        (-max..=max).step_by(2).map(|v| v as f64).collect()
    };
    let total = levels.len().pow(k as u32);
    assert!(total <= 1 << 16, "exhaustive search too large");
    let mut best = vec![levels[0]; k];
    let mut best_metric = f64::INFINITY;
    let mut cand = vec![0.0; k];
    for idx in 0..total {
        let mut t = idx;
        for c in cand.iter_mut() {
            *c = levels[t % levels.len()];
            t /= levels.len();
        }
        let hx = h.matvec(&cand);
        let metric: f64 = y
            .iter()
            .zip(hx.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if metric < best_metric {
            best_metric = metric;
            best.copy_from_slice(&cand);
        }
    }
    best
}

/// Max relative error between two gradients, relative to `max(1, |g_ref|)`.
pub fn rel_err(a: f64, g_ref: f64) -> f64 {
    (a - g_ref).abs() / g_ref.abs().max(1.0)
}
