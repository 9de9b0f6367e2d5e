//! Dense row-major matrices of 64-bit floats.
//!
//! This is the only tensor type the crate needs: per-class weight matrices,
//! feature batches, and attribute tables all fit in it. Entries are required
//! to be finite; constructors and ingestion paths validate this so downstream
//! arithmetic never has to re-check.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, validating length and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::new",
                format!("{rows}x{cols} = {} entries", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("matrix data"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
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

    pub fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self * x` for a column vector `x`, i.e. one dot product per row.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::shape(
                "matvec",
                format!("vector of length {}", self.cols),
                format!("length {}", x.len()),
            ));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }

    /// Largest absolute entry-wise difference; shapes must match.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert!(self.same_shape(other), "max_abs_diff on mismatched shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Index of the largest value; ties break to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    debug_assert!(!xs.is_empty());
    let mut best = 0;
    for i in 1..xs.len() {
        if xs[i] > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_identity_passes_through() {
        let w = Matrix::identity(2);
        let s = w.matvec(&[0.9, 0.1]).unwrap();
        assert_eq!(s, vec![0.9, 0.1]);
    }

    #[test]
    fn matvec_zero_matrix_gives_zeros() {
        let w = Matrix::zeros(3, 4);
        let s = w.matvec(&[1.0, -2.0, 3.5, 0.25]).unwrap();
        assert_eq!(s, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn matvec_matches_hand_dot_products() {
        let w = Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = w.matvec(&[1.0, 1.0]).unwrap();
        assert_eq!(s, vec![3.0, 7.0]);
    }

    #[test]
    fn matvec_rejects_dimension_mismatch() {
        let w = Matrix::zeros(2, 3);
        assert!(matches!(w.matvec(&[1.0, 2.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn new_rejects_non_finite() {
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[1.0, 2.0, 2.0]), 1);
    }
}
