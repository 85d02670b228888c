//! Minimal dense real linear algebra: row-major `f64` matrices, Gram matrix
//! construction, and a Cholesky-based SPD solver. No pivoting, no sparsity,
//! no complex BLAS — everything downstream works in the real model.

use crate::error::{Error, Result};

/// Plain vector of 64-bit floats. Semantics (received signal, symbols,
/// dual variables, ...) live in the owning modules.
pub type Vector = Vec<f64>;

/// Dense row-major matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Wraps `data` (row-major, length `rows * cols`).
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Matrix {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Matrix {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix::new(rows, cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `A x`.
    pub fn matvec(&self, x: &[f64]) -> Vector {
        assert_eq!(x.len(), self.cols, "matvec length mismatch");
        let mut out = vec![0.0; self.rows];
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.row(r);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x.iter()) {
                acc += a * b;
            }
            *o = acc;
        }
        out
    }

    /// `Aᵀ x`.
    pub fn matvec_t(&self, x: &[f64]) -> Vector {
        assert_eq!(x.len(), self.rows, "matvec_t length mismatch");
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let xr = x[r];
            let row = self.row(r);
            for (o, a) in out.iter_mut().zip(row.iter()) {
                *o += a * xr;
            }
        }
        out
    }
}

/// `HᵀH`, exactly symmetric: the upper triangle is computed and mirrored.
pub(crate) fn gram(h: &Matrix) -> Matrix {
    let k = h.cols();
    let mut g = Matrix::zeros(k, k);
    for r in 0..h.rows() {
        let row = h.row(r);
        for i in 0..k {
            let hi = row[i];
            let gi = &mut g.data[i * k..(i + 1) * k];
            for j in i..k {
                gi[j] += hi * row[j];
            }
        }
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let v = g.get(i, j);
            g.set(j, i, v);
        }
    }
    g
}

pub(crate) fn add_ridge(g: &mut Matrix, ridge: f64) {
    let n = g.rows();
    for i in 0..n {
        let v = g.get(i, i) + ridge;
        g.set(i, i, v);
    }
}

/// `HᵀH + rho I` for `rho > 0`. The result is symmetric positive definite
/// and symmetric bit-for-bit.
pub fn gram_plus_ridge(h: &Matrix, rho: f64) -> Result<Matrix> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidParam(format!(
            "ridge rho must be positive and finite, got {rho}"
        )));
    }
    let mut g = gram(h);
    add_ridge(&mut g, rho);
    Ok(g)
}

/// Lower-triangular Cholesky factor of an SPD matrix, reusable across solves.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    n: usize,
    l: Vec<f64>, // row-major lower triangle, upper left as zero
}

impl CholeskyFactor {
    /// Factorizes `a = L Lᵀ`. Only the lower triangle of `a` is read, so the
    /// caller's matrix must be symmetric for the solve to be meaningful.
    pub fn new(a: &Matrix) -> Result<CholeskyFactor> {
        if a.rows() != a.cols() {
            return Err(Error::dim(
                "cholesky",
                format!("matrix is {}x{}, need square", a.rows(), a.cols()),
            ));
        }
        let n = a.rows();
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) {
                return Err(Error::SingularPivot { index: j, value: d });
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(CholeskyFactor { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` via the two triangular systems.
    pub fn solve(&self, b: &[f64]) -> Vector {
        assert_eq!(b.len(), self.n, "cholesky solve length mismatch");
        let n = self.n;
        let l = &self.l;
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            let row = &l[i * n..i * n + i];
            for (lk, wk) in row.iter().zip(w.iter()) {
                s -= lk * wk;
            }
            w[i] = s / l[i * n + i];
        }
        let mut x = w;
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
        x
    }
}

/// Solves the SPD system `A x = b` through a Cholesky factorization; the
/// inverse is never formed.
pub fn solve_spd(a: &Matrix, b: &[f64]) -> Result<Vector> {
    if b.len() != a.rows() {
        return Err(Error::dim(
            "solve_spd",
            format!("rhs length {} vs matrix {}x{}", b.len(), a.rows(), a.cols()),
        ));
    }
    Ok(CholeskyFactor::new(a)?.solve(b))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
