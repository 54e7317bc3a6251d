//! Dense row-major `f64` matrix.
//!
//! All weight tensors, windows, and intermediate states in this crate are
//! `Matrix` values. Column vectors are represented as `n x 1` matrices.
//! Operations that can produce non-finite values scan their output and fail
//! with a numeric error instead of letting NaN/Inf escape.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from row-major data. Fails if the length is wrong or any entry
    /// is non-finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::validation(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "matrix entry ({}, {}) is {}",
                idx / cols.max(1),
                idx % cols.max(1),
                data[idx]
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::validation("ragged rows in matrix literal".to_string()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    /// Column vector (`n x 1`).
    pub fn column(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::from_vec(n, 1, values)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Row `i` as a column vector (`cols x 1`).
    pub fn row_vector(&self, i: usize) -> Matrix {
        Matrix {
            rows: self.cols,
            cols: 1,
            data: self.row(i).to_vec(),
        }
    }

    fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
        Error::Shape {
            op,
            left_rows: a.rows,
            left_cols: a.cols,
            right_rows: b.rows,
            right_cols: b.cols,
        }
    }

    fn check_finite(self, op: &'static str) -> Result<Self> {
        if let Some(idx) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "{} produced {} at ({}, {})",
                op,
                self.data[idx],
                idx / self.cols.max(1),
                idx % self.cols.max(1)
            )));
        }
        Ok(self)
    }

    /// `self * b`.
    pub fn matmul(&self, b: &Matrix) -> Result<Matrix> {
        if self.cols != b.rows {
            return Err(Self::shape_err("matmul", self, b));
        }
        let mut out = Matrix::zeros(self.rows, b.cols);
        // i-k-j loop order keeps both operands in row-major streaming access.
        for i in 0..self.rows {
            let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for k in 0..self.cols {
                let a_ik = self.data[i * self.cols + k];
                if a_ik == 0.0 {
                    continue;
                }
                let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += a_ik * bv;
                }
            }
        }
        out.check_finite("matmul")
    }

    /// `self^T * b` without materializing the transpose.
    pub fn matmul_tn(&self, b: &Matrix) -> Result<Matrix> {
        if self.rows != b.rows {
            return Err(Self::shape_err("matmul_tn", self, b));
        }
        let mut out = Matrix::zeros(self.cols, b.cols);
        for k in 0..self.rows {
            let a_row = &self.data[k * self.cols..(k + 1) * self.cols];
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (i, &av) in a_row.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += av * bv;
                }
            }
        }
        out.check_finite("matmul_tn")
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn add(&self, b: &Matrix) -> Result<Matrix> {
        if self.shape() != b.shape() {
            return Err(Self::shape_err("add", self, b));
        }
        let mut out = self.clone();
        for (o, &bv) in out.data.iter_mut().zip(&b.data) {
            *o += bv;
        }
        Ok(out)
    }

    pub fn sub(&self, b: &Matrix) -> Result<Matrix> {
        if self.shape() != b.shape() {
            return Err(Self::shape_err("sub", self, b));
        }
        let mut out = self.clone();
        for (o, &bv) in out.data.iter_mut().zip(&b.data) {
            *o -= bv;
        }
        Ok(out)
    }

    /// Elementwise product.
    pub fn hadamard(&self, b: &Matrix) -> Result<Matrix> {
        if self.shape() != b.shape() {
            return Err(Self::shape_err("hadamard", self, b));
        }
        let mut out = self.clone();
        for (o, &bv) in out.data.iter_mut().zip(&b.data) {
            *o *= bv;
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        let mut out = self.clone();
        for o in out.data.iter_mut() {
            *o *= c;
        }
        out
    }

    pub fn add_assign(&mut self, b: &Matrix) -> Result<()> {
        if self.shape() != b.shape() {
            return Err(Self::shape_err("add_assign", self, b));
        }
        for (o, &bv) in self.data.iter_mut().zip(&b.data) {
            *o += bv;
        }
        Ok(())
    }

    /// `self += u * v^T` for column vectors `u` (rows x 1) and `v` (cols x 1).
    /// Gradient accumulation path in backpropagation.
    pub fn add_outer_assign(&mut self, u: &Matrix, v: &Matrix) -> Result<()> {
        if u.cols != 1 || v.cols != 1 || u.rows != self.rows || v.rows != self.cols {
            return Err(Self::shape_err("add_outer_assign", u, v));
        }
        for i in 0..self.rows {
            let ui = u.data[i];
            if ui == 0.0 {
                continue;
            }
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (o, &vv) in row.iter_mut().zip(&v.data) {
                *o += ui * vv;
            }
        }
        Ok(())
    }

    /// Apply `f` to every entry without a finiteness check. Callers that can
    /// produce non-finite values should use [`map_elementwise`] instead.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

/// Apply `f` to every entry of `a`; fail with the offending index if the
/// result is non-finite.
pub fn map_elementwise(f: impl Fn(f64) -> f64, a: &Matrix) -> Result<Matrix> {
    let out = a.map(f);
    out.check_finite("map_elementwise")
}

/// Numerically stable logistic sigmoid, `1 / (1 + e^-x)`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of sigmoid expressed through its output `s`.
#[inline]
pub fn dsigmoid(s: f64) -> f64 {
    s * (1.0 - s)
}

/// Derivative of tanh expressed through its output `t`.
#[inline]
pub fn dtanh(t: f64) -> f64 {
    1.0 - t * t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let i = Matrix::identity(2);
        assert_eq!(i.matmul(&a).unwrap(), a);
        assert_eq!(a.matmul(&i).unwrap(), a);
    }

    #[test]
    fn matmul_hand_computed() {
        // [1 2] * [3; 4] = [11]
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Matrix::column(vec![3.0, 4.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), (1, 1));
        assert_eq!(c.get(0, 0), 11.0);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 2);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("2x2"), "got: {msg}");
        assert_eq!(err.class(), crate::error::ErrorClass::Shape);
    }

    #[test]
    fn matmul_tn_matches_explicit_transpose() {
        let a = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0], vec![2.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![-1.0]]).unwrap();
        let fast = a.matmul_tn(&b).unwrap();
        let slow = a.transpose().matmul(&b).unwrap();
        assert_eq!(fast, slow);
    }

    #[test]
    fn sigmoid_midpoint_and_tanh_origin() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(0.0f64.tanh(), 0.0);
    }

    #[test]
    fn sigmoid_extreme_negative_matches_extended_precision_oracle() {
        // Reference value computed with 60-digit arithmetic.
        let expected = 3.720075976020836e-44;
        let m = map_elementwise(sigmoid, &Matrix::from_rows(&[vec![-100.0]]).unwrap()).unwrap();
        let got = m.get(0, 0);
        assert!(got > 0.0 && got <= 1e-30);
        assert!((got - expected).abs() / expected < 1e-12, "got {got:e}");
    }

    #[test]
    fn map_elementwise_reports_offending_index() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 0.0]]).unwrap();
        let err = map_elementwise(|v| 1.0 / v, &a).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(1, 1)"), "got: {msg}");
        assert_eq!(err.class(), crate::error::ErrorClass::Numeric);
    }

    #[test]
    fn from_vec_rejects_non_finite() {
        let err = Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).unwrap_err();
        assert_eq!(err.class(), crate::error::ErrorClass::Numeric);
    }
}
