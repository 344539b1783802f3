//! Dense `f64` vectors used for iterates, gradients and momentum buffers.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Threshold below which [`Vector::normalized`] treats its input as zero.
pub const NORMALIZE_EPS: f64 = 1e-12;

/// A dense real vector of fixed dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Self {
        Vector(data)
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        Vector(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    fn check_dim(&self, other: &Vector) -> Result<()> {
        ensure(self.dim() == other.dim(), || {
            format!("dimension mismatch: {} vs {}", self.dim(), other.dim())
        })
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        self.check_dim(other)?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        self.check_dim(other)?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self.dot_unchecked(other))
    }

    pub fn scale(&self, c: f64) -> Vector {
        Vector(self.0.iter().map(|v| v * c).collect())
    }

    pub fn norm(&self) -> f64 {
        self.dot_unchecked(self).sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot_unchecked(self)
    }

    /// Euclidean distance. Panics on dimension mismatch.
    pub fn distance(&self, other: &Vector) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn distance_sq(&self, other: &Vector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// `v / ‖v‖`, or the zero vector when `‖v‖ <= eps`.
    pub fn normalized(&self, eps: f64) -> Vector {
        let n = self.norm();
        if n > eps {
            Vector(self.0.iter().map(|v| v / n).collect())
        } else {
            Vector::zeros(self.dim())
        }
    }

    /// `self += c * other`. Panics on dimension mismatch.
    pub fn axpy(&mut self, c: f64, other: &Vector) {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += c * b;
        }
    }

    pub(crate) fn dot_unchecked(&self, other: &Vector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    fn zip_map(&self, other: &Vector, f: impl Fn(f64, f64) -> f64) -> Vector {
        Vector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Arithmetic mean of a non-empty set of equal-dimension vectors.
    pub fn mean<'a, I>(vectors: I) -> Result<Vector>
    where
        I: IntoIterator<Item = &'a Vector>,
    {
        let mut iter = vectors.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| crate::Error::config("mean of an empty set"))?;
        // Offsets from the first vector keep the mean of identical inputs exact.
        let mut offset = Vector::zeros(first.dim());
        let mut count = 1usize;
        for v in iter {
            first.check_dim(v)?;
            for ((o, a), b) in offset.0.iter_mut().zip(&v.0).zip(&first.0) {
                *o += a - b;
            }
            count += 1;
        }
        let mut out = first.clone();
        out.axpy(1.0 / count as f64, &offset);
        Ok(out)
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector(data)
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Checks that a non-empty set of vectors share one dimension and returns it.
pub(crate) fn common_dim(vectors: &[Vector]) -> Result<usize> {
    let first = vectors
        .first()
        .ok_or_else(|| crate::Error::config("empty vector set"))?;
    let d = first.dim();
    for (i, v) in vectors.iter().enumerate() {
        ensure(v.dim() == d, || {
            format!("vector {i} has dimension {}, expected {d}", v.dim())
        })?;
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pythagorean_norm() {
        assert_eq!(Vector::new(vec![3.0, 4.0]).norm(), 5.0);
    }

    #[test]
    fn orthogonal_dot_is_zero() {
        let a = Vector::new(vec![1.0, 0.0]);
        let b = Vector::new(vec![0.0, 1.0]);
        assert_eq!(a.dot(&b).unwrap(), 0.0);
    }

    #[test]
    fn zero_scaling() {
        assert_eq!(Vector::filled(2, 1.0).scale(0.0), Vector::zeros(2));
    }

    #[test]
    fn add_rejects_mismatched_dims() {
        let a = Vector::zeros(2);
        let b = Vector::zeros(3);
        assert!(a.add(&b).is_err());
        assert!(a.dot(&b).is_err());
    }

    #[test]
    fn normalize_cases() {
        assert_eq!(
            Vector::new(vec![3.0, 4.0]).normalized(NORMALIZE_EPS),
            Vector::new(vec![0.6, 0.8])
        );
        assert_eq!(Vector::zeros(2).normalized(NORMALIZE_EPS), Vector::zeros(2));
        assert_eq!(
            Vector::new(vec![2e-13, 0.0]).normalized(1e-12),
            Vector::zeros(2)
        );
    }

    #[test]
    fn mean_of_two() {
        let m = Vector::mean(&[Vector::new(vec![1.0, 1.0]), Vector::new(vec![3.0, 3.0])]).unwrap();
        assert_eq!(m, Vector::new(vec![2.0, 2.0]));
    }

    #[test]
    fn mean_of_identical_is_exact() {
        let v = Vector::new(vec![0.1, 1.0 / 3.0, -7.3]);
        assert_eq!(Vector::mean(&vec![v.clone(); 17]).unwrap(), v);
    }

    proptest! {
        #[test]
        fn normalized_norm_is_zero_or_one(v in prop::collection::vec(-1e6f64..1e6, 1..16)) {
            let n = Vector::new(v).normalized(NORMALIZE_EPS).norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() <= 1e-12);
        }
    }
}
