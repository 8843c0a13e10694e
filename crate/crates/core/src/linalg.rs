//! Minimal dense linear algebra: vector helpers and an LU solver with
//! partial pivoting. Systems here are tiny (problem dimension by problem
//! dimension), so a direct factorization is always appropriate.

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Config("matrix needs at least one row".into()));
        }
        let cols = rows[0].len();
        if cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Config("matrix rows must be nonempty and equal-length".into()));
        }
        Ok(Mat {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| dot(&self.data[i * self.cols..(i + 1) * self.cols], x))
            .collect()
    }

    /// A^T x
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            axpy(x[i], &self.data[i * self.cols..(i + 1) * self.cols], &mut out);
        }
        out
    }

    /// A A^T, useful for normal equations of wide systems.
    pub fn gram_t(&self) -> Mat {
        let mut g = Mat::zeros(self.rows, self.rows);
        for i in 0..self.rows {
            for j in 0..self.rows {
                g[(i, j)] = dot(
                    &self.data[i * self.cols..(i + 1) * self.cols],
                    &self.data[j * self.cols..(j + 1) * self.cols],
                );
            }
        }
        g
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting, stored in place.
pub struct Lu {
    lu: Mat,
    piv: Vec<usize>,
}

impl Lu {
    pub fn factor(mut a: Mat) -> Result<Lu> {
        if a.rows != a.cols {
            return Err(Error::Config("LU needs a square matrix".into()));
        }
        let n = a.rows;
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = a[(k, k)].abs();
            for i in k + 1..n {
                let v = a[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::Config(format!(
                    "singular matrix in LU factorization (pivot {best:e} at column {k})"
                )));
            }
            if p != k {
                piv.swap(p, k);
                for j in 0..n {
                    let tmp = a[(k, j)];
                    a[(k, j)] = a[(p, j)];
                    a[(p, j)] = tmp;
                }
            }
            let pivot = a[(k, k)];
            for i in k + 1..n {
                let l = a[(i, k)] / pivot;
                a[(i, k)] = l;
                for j in k + 1..n {
                    a[(i, j)] -= l * a[(k, j)];
                }
            }
        }
        Ok(Lu { lu: a, piv })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        debug_assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }
}

/// Solves A x = b by LU with partial pivoting.
pub fn solve(a: Mat, b: &[f64]) -> Result<Vec<f64>> {
    Ok(Lu::factor(a)?.solve(b))
}
