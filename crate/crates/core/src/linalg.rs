//! Small dense/sparse kernels: Thomas algorithm and Jacobi-preconditioned CG.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Tridiagonal system with sub-, main and super-diagonals.
///
/// `lower[0]` and `upper[n-1]` are unused.
#[derive(Debug, Clone, Default)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Tridiagonal { lower: vec![0.0; n], diag: vec![0.0; n], upper: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `y = A x`.
    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    /// Solves `A x = rhs` in place (rhs becomes x). No pivoting; the systems
    /// assembled here are diagonally dominant M-matrices.
    pub fn solve_in_place(&self, rhs: &mut [f64], scratch: &mut Vec<f64>) -> Result<()> {
        let n = self.len();
        scratch.clear();
        scratch.resize(n, 0.0);
        let mut beta = self.diag[0];
        if beta == 0.0 {
            return Err(Error::Singular { what: "tridiagonal solve" });
        }
        rhs[0] /= beta;
        for i in 1..n {
            scratch[i] = self.upper[i - 1] / beta;
            beta = self.diag[i] - self.lower[i] * scratch[i];
            if beta == 0.0 || !beta.is_finite() {
                return Err(Error::Singular { what: "tridiagonal solve" });
            }
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) / beta;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            rhs[i] -= scratch[i + 1] * rhs[i + 1];
        }
        Ok(())
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from unsorted triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_unstable_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { n, row_ptr, cols, vals }
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for (i, di) in d.iter_mut().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.cols[k] == i {
                    *di = self.vals[k];
                }
            }
        }
        d
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Jacobi-preconditioned conjugate gradients for SPD (or consistent PSD)
/// systems. `project` is applied to every residual; pass the mean-removal
/// projector for pure-Neumann/periodic problems. Returns the iteration count.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
    project: &dyn Fn(&mut [f64]),
) -> Result<usize> {
    let n = a.n;
    let diag = a.diagonal();
    let mut r = vec![0.0; n];
    let mut ax = vec![0.0; n];
    a.mul(x, &mut ax);
    for i in 0..n {
        r[i] = b[i] - ax[i];
    }
    project(&mut r);
    let b_norm = {
        let mut pb = b.to_vec();
        project(&mut pb);
        norm(&pb)
    };
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let precond = |r: &[f64], z: &mut [f64]| {
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
    };
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    project(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        if norm(&r) <= rel_tol * b_norm {
            return Ok(it);
        }
        a.mul(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Singular { what: "conjugate gradient" });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        project(&mut r);
        precond(&r, &mut z);
        project(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if norm(&r) <= rel_tol * b_norm {
        Ok(max_iter)
    } else {
        Err(Error::NoConvergence { what: "conjugate gradient", iterations: max_iter })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_matches_dense_product() {
        let n = 7;
        let mut a = Tridiagonal::zeros(n);
        for i in 0..n {
            a.diag[i] = 4.0 + i as f64;
            a.lower[i] = -1.0 - 0.1 * i as f64;
            a.upper[i] = -0.5;
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 2.0).collect();
        let mut b = vec![0.0; n];
        a.mul(&x, &mut b);
        let mut scratch = Vec::new();
        a.solve_in_place(&mut b, &mut scratch).unwrap();
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn cg_solves_laplacian() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, t);
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let mut b = vec![0.0; n];
        a.mul(&xs, &mut b);
        let mut x = vec![0.0; n];
        conjugate_gradient(&a, &b, &mut x, 1e-12, 500, &|_| {}).unwrap();
        for i in 0..n {
            assert!((x[i] - xs[i]).abs() < 1e-9);
        }
    }
}
