//! Small dense matrices for the controller and the reservoir readout.
//!
//! Row-major storage, sized at runtime. Nothing here is tuned for large
//! problems; the biggest system solved is the ridge normal matrix of the
//! echo state network (reservoir size + 1 square).

use std::ops::{Index, IndexMut};

use crate::scalar::{lit, Real};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LinalgError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("matrix is singular or not positive definite")]
    Singular,
    #[error("matrix is not square: {0:?}")]
    NotSquare((usize, usize)),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn diag(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from equally sized rows.
    ///
    /// Panics if the rows are ragged.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::Shape {
                op: "matmul",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let src = rhs.row(k);
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[T]) -> Result<Vec<T>, LinalgError> {
        if self.cols != v.len() {
            return Err(LinalgError::Shape {
                op: "mul_vec",
                lhs: self.shape(),
                rhs: (v.len(), 1),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect())
    }

    fn zip_with(
        &self,
        rhs: &Self,
        op: &'static str,
        f: impl Fn(T, T) -> T,
    ) -> Result<Self, LinalgError> {
        if self.shape() != rhs.shape() {
            return Err(LinalgError::Shape {
                op,
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, rhs: &Self) -> Result<Self, LinalgError> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self, LinalgError> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| a * s).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &a| m.max(a.abs()))
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Self, LinalgError> {
        let n = self.square_dim()?;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| a[(p, col)].abs().partial_cmp(&a[(q, col)].abs()).unwrap())
                .unwrap();
            let pv = a[(pivot, col)];
            if pv.abs() <= T::epsilon() * a.max_abs().max(T::one()) {
                return Err(LinalgError::Singular);
            }
            a.swap_rows(pivot, col);
            inv.swap_rows(pivot, col);
            let scale = T::one() / pv;
            for j in 0..n {
                a[(col, j)] *= scale;
                inv[(col, j)] *= scale;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[(r, col)];
                if f == T::zero() {
                    continue;
                }
                for j in 0..n {
                    let (ac, ic) = (a[(col, j)], inv[(col, j)]);
                    a[(r, j)] -= f * ac;
                    inv[(r, j)] -= f * ic;
                }
            }
        }
        Ok(inv)
    }

    /// Solves `self * X = rhs` for symmetric positive definite `self`.
    pub fn cholesky_solve(&self, rhs: &Self) -> Result<Self, LinalgError> {
        let n = self.square_dim()?;
        if rhs.rows != n {
            return Err(LinalgError::Shape {
                op: "cholesky_solve",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        // Lower factor, row-major.
        let mut l = Self::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = self[(i, j)];
                let (li, lj) = (&l.data[i * n..i * n + j], &l.data[j * n..j * n + j]);
                for (&a, &b) in li.iter().zip(lj) {
                    s -= a * b;
                }
                if i == j {
                    // Pivots at round-off level of the original diagonal mean rank deficiency.
                    let tol = T::epsilon() * lit::<T>(n as f64) * self[(i, i)].abs();
                    if !(s > tol) || !s.is_finite() {
                        return Err(LinalgError::Singular);
                    }
                    l[(i, i)] = s.sqrt();
                } else {
                    l[(i, j)] = s / l[(j, j)];
                }
            }
        }
        let mut x = rhs.clone();
        for c in 0..rhs.cols {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / l[(i, i)];
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in i + 1..n {
                    s -= l[(k, i)] * x[(k, c)];
                }
                x[(i, c)] = s / l[(i, i)];
            }
        }
        Ok(x)
    }

    /// Characteristic polynomial `det(sI - A)` by Faddeev-LeVerrier.
    ///
    /// Returns coefficients from the leading one downward:
    /// `[1, c1, ..., cn]` for `s^n + c1 s^(n-1) + ... + cn`.
    pub fn characteristic_polynomial(&self) -> Result<Vec<T>, LinalgError> {
        let n = self.square_dim()?;
        let mut coeffs = vec![T::one()];
        let mut m = Self::zeros(n, n);
        let eye = Self::identity(n);
        for k in 1..=n {
            let prev = *coeffs.last().unwrap();
            m = self.matmul(&m)?.add(&eye.scale(prev))?;
            let am = self.matmul(&m)?;
            coeffs.push(-am.trace() / lit::<T>(k as f64));
        }
        Ok(coeffs)
    }

    /// True when every eigenvalue has a strictly negative real part,
    /// decided by the Routh-Hurwitz criterion on the characteristic polynomial.
    pub fn is_hurwitz(&self) -> Result<bool, LinalgError> {
        Ok(routh_hurwitz_stable(&self.characteristic_polynomial()?))
    }

    fn square_dim(&self) -> Result<usize, LinalgError> {
        if self.rows != self.cols {
            return Err(LinalgError::NotSquare(self.shape()));
        }
        Ok(self.rows)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }
}

/// Routh array test for a polynomial given highest degree first.
/// A zero in the first column counts as not strictly stable.
pub fn routh_hurwitz_stable<T: Real>(coeffs: &[T]) -> bool {
    let coeffs: Vec<T> = if coeffs[0] < T::zero() {
        coeffs.iter().map(|&c| -c).collect()
    } else {
        coeffs.to_vec()
    };
    let degree = coeffs.len() - 1;
    if degree == 0 {
        return true;
    }
    if coeffs.iter().any(|&c| !(c > T::zero())) {
        return false;
    }
    let width = degree / 2 + 1;
    let mut upper: Vec<T> = coeffs.iter().step_by(2).copied().collect();
    let mut lower: Vec<T> = coeffs.iter().skip(1).step_by(2).copied().collect();
    upper.resize(width, T::zero());
    lower.resize(width, T::zero());
    for _ in 0..degree {
        let pivot = lower[0];
        if !(pivot > T::zero()) {
            return false;
        }
        let mut next = vec![T::zero(); width];
        for k in 0..width - 1 {
            next[k] = (pivot * upper[k + 1] - upper[0] * lower[k + 1]) / pivot;
        }
        upper = lower;
        lower = next;
        if lower.iter().all(|&c| c == T::zero()) {
            // Only the final row may vanish entirely.
            return upper[1..].iter().all(|&c| c == T::zero());
        }
    }
    true
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_roundtrip() {
        let a = Mat::from_rows(&[[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]]);
        let inv = a.inverse().unwrap();
        let eye = a.matmul(&inv).unwrap();
        assert!(eye.sub(&Mat::identity(3)).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn singular_inverse_rejected() {
        let a = Mat::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        assert_eq!(a.inverse(), Err(LinalgError::Singular));
    }

    #[test]
    fn cholesky_matches_inverse() {
        let a = Mat::from_rows(&[[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]]);
        let b = Mat::from_rows(&[[1.0, 0.0], [2.0, 1.0], [3.0, -1.0]]);
        let x = a.cholesky_solve(&b).unwrap();
        let y = a.inverse().unwrap().matmul(&b).unwrap();
        assert!(x.sub(&y).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Mat::from_rows(&[[1.0, 2.0], [2.0, 1.0]]);
        assert!(a.cholesky_solve(&Mat::identity(2)).is_err());
    }

    #[test]
    fn char_poly_of_companion() {
        // (s+1)(s+2)(s+3) = s^3 + 6s^2 + 11s + 6
        let a = Mat::<f64>::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-6.0, -11.0, -6.0]]);
        let p = a.characteristic_polynomial().unwrap();
        for (got, want) in p.iter().zip([1.0, 6.0, 11.0, 6.0]) {
            assert!((got - want).abs() < 1e-10);
        }
        assert!(a.is_hurwitz().unwrap());
    }

    #[test]
    fn routh_cases() {
        assert!(routh_hurwitz_stable(&[1.0, 2.0, 1.0]));
        assert!(!routh_hurwitz_stable(&[1.0, 0.0, 1.0])); // pure imaginary
        assert!(!routh_hurwitz_stable(&[1.0, -1.0, 1.0]));
        // s^3 + s^2 + s + 6: two RHP roots
        assert!(!routh_hurwitz_stable(&[1.0, 1.0, 1.0, 6.0]));
        // s^4 + 3s^3 + 5s^2 + 4s + 2 = (s^2+s+1)(s^2+2s+2)
        assert!(routh_hurwitz_stable(&[1.0, 3.0, 5.0, 4.0, 2.0]));
    }
}
