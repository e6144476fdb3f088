//! Complex matrices stored as separate real and imaginary parts.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{dim_err, CoreError, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    pub re: Matrix,
    pub im: Matrix,
}

impl ComplexMatrix {
    pub fn new(re: Matrix, im: Matrix) -> Result<Self> {
        if re.rows() != im.rows() || re.cols() != im.cols() {
            return dim_err("real and imaginary parts differ in shape");
        }
        Ok(ComplexMatrix { re, im })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            re: Matrix::zeros(rows, cols),
            im: Matrix::zeros(rows, cols),
        }
    }

    pub fn identity(n: usize) -> Self {
        ComplexMatrix {
            re: Matrix::identity(n),
            im: Matrix::zeros(n, n),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut out = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                out.set(r, c, f(r, c));
            }
        }
        out
    }

    /// Column vector from complex entries.
    pub fn column_vector(values: &[Complex64]) -> Self {
        Self::from_fn(values.len(), 1, |r, _| values[r])
    }

    pub fn rows(&self) -> usize {
        self.re.rows()
    }

    pub fn cols(&self) -> usize {
        self.re.cols()
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        Complex64::new(self.re[(r, c)], self.im[(r, c)])
    }

    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.re[(r, c)] = v.re;
        self.im[(r, c)] = v.im;
    }

    pub fn column(&self, c: usize) -> ComplexMatrix {
        Self::from_fn(self.rows(), 1, |r, _| self.get(r, c))
    }

    pub fn columns(&self, start: usize, len: usize) -> ComplexMatrix {
        Self::from_fn(self.rows(), len, |r, c| self.get(r, start + c))
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> ComplexMatrix {
        Self::from_fn(rows, cols, |r, c| self.get(r0 + r, c0 + c))
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &ComplexMatrix) {
        for r in 0..b.rows() {
            for c in 0..b.cols() {
                self.set(r0 + r, c0 + c, b.get(r, c));
            }
        }
    }

    /// Conjugate transpose.
    pub fn h(&self) -> ComplexMatrix {
        Self::from_fn(self.cols(), self.rows(), |r, c| self.get(c, r).conj())
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols() != other.rows() {
            return dim_err(format!(
                "complex {}x{} times {}x{}",
                self.rows(),
                self.cols(),
                other.rows(),
                other.cols()
            ));
        }
        let (n, k, m) = (self.rows(), self.cols(), other.cols());
        let mut out = Self::zeros(n, m);
        for i in 0..n {
            for l in 0..k {
                let a = self.get(i, l);
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for j in 0..m {
                    let v = out.get(i, j) + a * other.get(l, j);
                    out.set(i, j, v);
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip(other, |a, b| a - b)
    }

    fn zip(&self, other: &ComplexMatrix, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<ComplexMatrix> {
        if self.rows() != other.rows() || self.cols() != other.cols() {
            return dim_err("elementwise op on different shapes");
        }
        Ok(Self::from_fn(self.rows(), self.cols(), |r, c| {
            f(self.get(r, c), other.get(r, c))
        }))
    }

    pub fn scale(&self, s: f64) -> ComplexMatrix {
        Self::from_fn(self.rows(), self.cols(), |r, c| self.get(r, c) * s)
    }

    pub fn scale_complex(&self, s: Complex64) -> ComplexMatrix {
        Self::from_fn(self.rows(), self.cols(), |r, c| self.get(r, c) * s)
    }

    /// Multiplies column `c` by `s[c]`.
    pub fn scale_columns(&self, s: &[f64]) -> ComplexMatrix {
        Self::from_fn(self.rows(), self.cols(), |r, c| self.get(r, c) * s[c])
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.re.data().iter().chain(self.im.data()).map(|x| x * x).sum()
    }

    pub fn column_norm_sq(&self, c: usize) -> f64 {
        (0..self.rows()).map(|r| self.get(r, c).norm_sqr()).sum()
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows().min(self.cols())).map(|i| self.get(i, i)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.re.data().iter().chain(self.im.data()).all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        self.re.max_abs_diff(&other.re).max(self.im.max_abs_diff(&other.im))
    }

    /// `[[Re, -Im], [Im, Re]]`.
    pub fn real_embedding(&self) -> Matrix {
        let (n, m) = (self.rows(), self.cols());
        Matrix::from_fn(2 * n, 2 * m, |r, c| {
            let (rr, cc) = (r % n, c % m);
            match (r < n, c < m) {
                (true, true) | (false, false) => self.re[(rr, cc)],
                (true, false) => -self.im[(rr, cc)],
                (false, true) => self.im[(rr, cc)],
            }
        })
    }

    pub fn hermitian_error(&self) -> f64 {
        self.max_abs_diff(&self.h())
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.rows(), self.cols(), |r, c| self.get(r, c))
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<Complex64>) -> ComplexMatrix {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }
}

/// LU factorization with partial pivoting of a real square matrix.
pub(crate) struct Lu {
    n: usize,
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    pub(crate) fn factor(a: &Matrix) -> Result<Lu> {
        let n = a.rows();
        if a.cols() != n {
            return dim_err("LU of a non-square matrix");
        }
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|r| (r, lu[(r, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pv == 0.0 {
                return Err(CoreError::Singular { condition: f64::INFINITY });
            }
            if p != k {
                for c in 0..n {
                    let t = lu[(k, c)];
                    lu[(k, c)] = lu[(p, c)];
                    lu[(p, c)] = t;
                }
                perm.swap(k, p);
            }
            let piv = lu[(k, k)];
            for r in k + 1..n {
                let f = lu[(r, k)] / piv;
                lu[(r, k)] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        lu[(r, c)] -= f * lu[(k, c)];
                    }
                }
            }
        }
        Ok(Lu { n, lu, perm })
    }

    pub(crate) fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut s = x[r];
            for c in 0..r {
                s -= self.lu[(r, c)] * x[c];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for c in r + 1..n {
                s -= self.lu[(r, c)] * x[c];
            }
            x[r] = s / self.lu[(r, r)];
        }
        x
    }

    /// Exact 1-norm condition number, from the explicit inverse.
    pub(crate) fn condition(&self, a: &Matrix) -> f64 {
        let n = self.n;
        let norm1 = |col_sum: &dyn Fn(usize) -> f64| (0..n).map(col_sum).fold(0.0, f64::max);
        let a_norm = norm1(&|c| (0..n).map(|r| a[(r, c)].abs()).sum());
        let mut inv_norm: f64 = 0.0;
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[c] = 1.0;
            let col = self.solve_vec(&e);
            inv_norm = inv_norm.max(col.iter().map(|x| x.abs()).sum());
        }
        a_norm * inv_norm
    }
}

/// Solves `A X = B` for complex `A` by partially pivoted elimination on the
/// real embedding.
pub fn complex_solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n {
        return dim_err(format!(
            "solve with A {}x{} and B {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        ));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(CoreError::NonFinite("complex_solve input".into()));
    }
    let emb = a.real_embedding();
    let lu = Lu::factor(&emb)?;
    let condition = lu.condition(&emb);
    if !(condition < 1e12) {
        return Err(CoreError::Singular { condition });
    }
    let mut x = ComplexMatrix::zeros(n, b.cols());
    let mut rhs = vec![0.0; 2 * n];
    for c in 0..b.cols() {
        for r in 0..n {
            rhs[r] = b.re[(r, c)];
            rhs[n + r] = b.im[(r, c)];
        }
        let sol = lu.solve_vec(&rhs);
        for r in 0..n {
            x.set(r, c, Complex64::new(sol[r], sol[n + r]));
        }
    }
    Ok(x)
}

/// Natural-log determinant of a Hermitian positive definite matrix, as half
/// the log-determinant of its real embedding (Cholesky).
pub fn logdet_hermitian(a: &ComplexMatrix) -> Result<f64> {
    if a.rows() != a.cols() {
        return dim_err("logdet of a non-square matrix");
    }
    if a.hermitian_error() > 1e-9 * (1.0 + a.frobenius_sq().sqrt()) {
        return Err(CoreError::Invalid("logdet input is not Hermitian".into()));
    }
    Ok(0.5 * logdet_spd(&a.real_embedding())?)
}

/// Log-determinant of a real symmetric positive definite matrix via Cholesky.
pub fn logdet_spd(a: &Matrix) -> Result<f64> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    let mut acc = 0.0;
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(CoreError::Invalid(format!(
                "matrix is not positive definite (pivot {d:e} at {j})"
            )));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        acc += 2.0 * d.ln();
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(acc)
}

/// Eigen-decomposition `A = Q diag(w) Q^H` of a Hermitian matrix.
pub fn hermitian_eigen(a: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let eig = a.to_nalgebra().symmetric_eigen();
    let w = eig.eigenvalues.iter().copied().collect();
    (w, ComplexMatrix::from_nalgebra(&eig.eigenvectors))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn solve_identity_and_scaled() {
        let b = ComplexMatrix::from_fn(3, 2, |r, k| c(r as f64 + 1.0, k as f64 - 0.5));
        let x = complex_solve(&ComplexMatrix::identity(3), &b).unwrap();
        assert!(x.max_abs_diff(&b) < 1e-15);
        let x = complex_solve(&ComplexMatrix::identity(3).scale(2.0), &b).unwrap();
        assert!(x.max_abs_diff(&b.scale(0.5)) < 1e-15);
    }

    #[test]
    fn singular_rejected() {
        let a = ComplexMatrix::from_fn(2, 2, |_, _| c(1.0, 1.0));
        assert!(matches!(
            complex_solve(&a, &ComplexMatrix::identity(2)),
            Err(CoreError::Singular { .. })
        ));
    }

    #[test]
    fn logdet_of_diagonal() {
        let a = ComplexMatrix::from_fn(2, 2, |r, k| if r == k { c(2.0 + r as f64, 0.0) } else { c(0.0, 0.0) });
        assert!((logdet_hermitian(&a).unwrap() - 6f64.ln()).abs() < 1e-14);
    }
}
