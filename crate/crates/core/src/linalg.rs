//! Fixed-capacity vectors for ambient coordinates.
//!
//! Every manifold in this crate lives in an ambient space of dimension at most
//! [`MAX_AMBIENT`], so points and tangent vectors are stored inline without
//! heap allocation.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

/// Largest supported ambient dimension.
pub const MAX_AMBIENT: usize = 8;

/// A vector in `R^n` with `n <= MAX_AMBIENT`.
#[derive(Clone, Copy, PartialEq)]
pub struct Vector {
    data: [f64; MAX_AMBIENT],
    len: usize,
}

/// Points are stored in ambient coordinates.
pub type Point = Vector;

impl Vector {
    pub fn zeros(len: usize) -> Self {
        assert!(len <= MAX_AMBIENT, "ambient dimension {len} exceeds {MAX_AMBIENT}");
        Self { data: [0.0; MAX_AMBIENT], len }
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut v = Self::zeros(xs.len());
        v.data[..xs.len()].copy_from_slice(xs);
        v
    }

    /// The `i`-th standard basis vector of `R^len`.
    pub fn basis(len: usize, i: usize) -> Self {
        let mut v = Self::zeros(len);
        v.data[i] = 1.0;
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data[..self.len]
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data[..self.len]
    }

    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.len, other.len);
        self.as_slice().iter().zip(other.as_slice()).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Self) {
        debug_assert_eq!(self.len, x.len);
        for i in 0..self.len {
            self.data[i] += a * x.data[i];
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut v = *self;
        for x in v.as_mut_slice() {
            *x *= a;
        }
        v
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }

    pub fn dist(&self, other: &Self) -> f64 {
        (*self - *other).norm()
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.as_slice()[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.as_mut_slice()[i]
    }
}

impl Add for Vector {
    type Output = Vector;
    fn add(mut self, rhs: Vector) -> Vector {
        self.axpy(1.0, &rhs);
        self
    }
}

impl Sub for Vector {
    type Output = Vector;
    fn sub(mut self, rhs: Vector) -> Vector {
        self.axpy(-1.0, &rhs);
        self
    }
}

impl AddAssign for Vector {
    fn add_assign(&mut self, rhs: Vector) {
        self.axpy(1.0, &rhs);
    }
}

impl SubAssign for Vector {
    fn sub_assign(&mut self, rhs: Vector) {
        self.axpy(-1.0, &rhs);
    }
}

impl Mul<f64> for Vector {
    type Output = Vector;
    fn mul(self, a: f64) -> Vector {
        self.scaled(a)
    }
}

impl Neg for Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        self.scaled(-1.0)
    }
}

/// An ordered set of tangent vectors at a common base point.
///
/// Frames produced by the diffusion engine are orthonormal for the manifold
/// metric; `dim()` equals the intrinsic dimension.
#[derive(Clone, Copy, PartialEq)]
pub struct Frame {
    vecs: [Vector; MAX_AMBIENT],
    dim: usize,
}

impl Frame {
    pub fn new(vectors: &[Vector]) -> Self {
        assert!(!vectors.is_empty() && vectors.len() <= MAX_AMBIENT);
        let mut vecs = [Vector::zeros(vectors[0].len()); MAX_AMBIENT];
        vecs[..vectors.len()].copy_from_slice(vectors);
        Self { vecs, dim: vectors.len() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vectors(&self) -> &[Vector] {
        &self.vecs[..self.dim]
    }

    pub fn vectors_mut(&mut self) -> &mut [Vector] {
        &mut self.vecs[..self.dim]
    }

    /// `sum_i coeffs[i] * e_i`
    pub fn combine(&self, coeffs: &[f64]) -> Vector {
        let mut v = Vector::zeros(self.vecs[0].len());
        for (e, c) in self.vectors().iter().zip(coeffs) {
            v.axpy(*c, e);
        }
        v
    }
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.vectors()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        let a = Vector::from_slice(&[1.0, 2.0, 2.0]);
        let b = Vector::basis(3, 1);
        assert_eq!(a.norm(), 3.0);
        assert_eq!((a - b)[1], 1.0);
        assert_eq!((a * 2.0 + b).as_slice(), &[2.0, 5.0, 4.0]);
        assert_eq!(a.dot(&b), 2.0);
    }

    #[test]
    fn frame_combination() {
        let f = Frame::new(&[Vector::basis(2, 0), Vector::basis(2, 1)]);
        assert_eq!(f.combine(&[3.0, -1.0]).as_slice(), &[3.0, -1.0]);
    }
}
