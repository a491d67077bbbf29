//! Dense row-major `f64` arrays with explicit shapes.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A dense array of 64-bit floats in row-major order.
///
/// The invariant `product(shape) == data.len()` is enforced by every
/// constructor. Values are not implicitly checked for finiteness;
/// [`Array::all_finite`] is the explicit check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Array {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Array {
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != data.len() || shape.iter().any(|&e| e == 0) {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                detail: format!("shape {:?} does not hold {} values", shape, data.len()),
            });
        }
        Ok(Array { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Array {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n: usize = shape.iter().product();
        Array {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// A 1x1 scalar.
    pub fn scalar(v: f64) -> Self {
        Array {
            shape: vec![1, 1],
            data: vec![v],
        }
    }

    /// An `n x m` matrix from rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
            return Err(Error::ShapeMismatch {
                op: "from_rows",
                detail: "rows must be nonempty and of equal length".into(),
            });
        }
        let mut data = Vec::with_capacity(n * m);
        for r in rows {
            data.extend_from_slice(r);
        }
        Ok(Array {
            shape: vec![n, m],
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// True iff this is a 1x1 (or length-1) array.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a scalar array.
    pub fn scalar_value(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    /// Rows of a 2-D array.
    pub fn rows(&self) -> usize {
        debug_assert_eq!(self.shape.len(), 2);
        self.shape[0]
    }

    /// Columns of a 2-D array.
    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.shape.len(), 2);
        self.shape[1]
    }

    /// Element (i, j) of a 2-D array.
    #[inline]
    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn set2(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.shape[1] + j] = v;
    }

    /// Explicit finiteness check (NaN/Inf detection is never implicit).
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Array {
        Array {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combine; shapes must match exactly.
    pub fn zip_map(&self, other: &Array, f: impl Fn(f64, f64) -> f64) -> Array {
        debug_assert_eq!(self.shape, other.shape);
        Array {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// In-place `self += scale * other`; shapes must match exactly.
    pub fn axpy(&mut self, scale: f64, other: &Array) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_bad_shape() {
        assert!(Array::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0]).is_err());
        assert!(Array::from_vec(vec![0], vec![]).is_err());
        assert!(Array::from_vec(vec![2, 2], vec![1.0; 4]).is_ok());
    }

    #[test]
    fn finiteness_is_explicit() {
        let a = Array::from_vec(vec![1, 2], vec![1.0, f64::NAN]).unwrap();
        assert!(!a.all_finite());
        let b = Array::from_vec(vec![1, 2], vec![1.0, 2.0]).unwrap();
        assert!(b.all_finite());
    }

    #[test]
    fn row_major_indexing() {
        let a = Array::from_vec(vec![2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(a.get2(0, 2), 2.0);
        assert_eq!(a.get2(1, 0), 3.0);
    }
}
