//! Small dense complex matrices.
//!
//! The simulation only needs a few hundred rows/columns, so a plain
//! row-major `Vec<Complex64>` with hand-written products is simpler and
//! faster to audit than pulling in a full linear-algebra stack. The one
//! nontrivial routine is a complex Cholesky factorization used by the
//! MMSE pilot estimator.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        CMat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// y = A x
    pub fn matvec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.cols {
            return Err(Error::ShapeMismatch(format!(
                "matvec: {} columns vs vector of length {}",
                self.cols,
                x.len()
            )));
        }
        let mut y = vec![Complex64::new(0.0, 0.0); self.rows];
        for (r, yr) in y.iter_mut().enumerate() {
            let row = self.row(r);
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            *yr = acc;
        }
        Ok(y)
    }

    /// y = Aᴴ x
    pub fn adjoint_matvec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.rows {
            return Err(Error::ShapeMismatch(format!(
                "adjoint_matvec: {} rows vs vector of length {}",
                self.rows,
                x.len()
            )));
        }
        let mut y = vec![Complex64::new(0.0, 0.0); self.cols];
        for (r, xr) in x.iter().enumerate() {
            let row = self.row(r);
            for (c, a) in row.iter().enumerate() {
                y[c] += a.conj() * xr;
            }
        }
        Ok(y)
    }

    /// C = A B
    pub fn mul(&self, other: &CMat) -> Result<CMat> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "mul: {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = CMat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let orow = other.row(k);
                let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    /// max_ij |A_ij - B_ij|
    pub fn max_abs_diff(&self, other: &CMat) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// max_ij |Re A_ij - Re Aᴴ_ij| + conjugate part; 0 for Hermitian matrices.
    pub fn hermitian_defect(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in 0..=r {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Lower-triangular Cholesky factor of a Hermitian positive-definite matrix:
/// A = L Lᴴ. Fails if a pivot is not strictly positive.
pub fn cholesky(a: &CMat) -> Result<CMat> {
    if a.rows() != a.cols() {
        return Err(Error::ShapeMismatch(format!("cholesky: {}x{}", a.rows(), a.cols())));
    }
    let n = a.rows();
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)].re;
        for k in 0..j {
            diag -= l[(j, k)].norm_sqr();
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::NonPsd(format!("pivot {diag:.3e} at index {j}")));
        }
        let dj = diag.sqrt();
        l[(j, j)] = Complex64::new(dj, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / dj;
        }
    }
    Ok(l)
}

/// Solve A x = b given the Cholesky factor L of A (forward then back
/// substitution).
pub fn cholesky_solve(l: &CMat, b: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = l.rows();
    if b.len() != n {
        return Err(Error::ShapeMismatch(format!("cholesky_solve: {} vs {}", n, b.len())));
    }
    // L y = b
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let lik = l[(i, k)];
            y[i] = y[i] - lik * y[k];
        }
        y[i] /= l[(i, i)];
    }
    // Lᴴ x = y
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let lki = l[(k, i)].conj();
            y[i] = y[i] - lki * y[k];
        }
        y[i] /= l[(i, i)];
    }
    Ok(y)
}
