//! Linear-algebra building blocks: sparse LU wrappers, symmetric
//! tridiagonal tools and a shift-invert subspace eigensolver.

pub mod sparse;
pub mod subspace;
pub mod tridiag;

use num_complex::Complex64;

/// Scalars handled by the sparse and eigen layers (`f64` and `Complex64`).
pub trait Scalar:
    faer::traits::ComplexField
    + Copy
    + Send
    + Sync
    + std::fmt::Debug
    + PartialEq
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::iter::Sum
    + 'static
{
    fn from_parts(re: f64, im: f64) -> Self;
    fn real(x: f64) -> Self {
        Self::from_parts(x, 0.0)
    }
    fn re(self) -> f64;
    fn conjugate(self) -> Self;
    fn modulus_sqr(self) -> f64;
    fn scale(self, x: f64) -> Self {
        self * Self::real(x)
    }
}

impl Scalar for f64 {
    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }
    fn re(self) -> f64 {
        self
    }
    fn conjugate(self) -> Self {
        self
    }
    fn modulus_sqr(self) -> f64 {
        self * self
    }
}

impl Scalar for Complex64 {
    fn from_parts(re: f64, im: f64) -> Self {
        Complex64::new(re, im)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn conjugate(self) -> Self {
        self.conj()
    }
    fn modulus_sqr(self) -> f64 {
        self.norm_sqr()
    }
}

/// Euclidean inner product `Σ conj(a_i) b_i`.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| x.conjugate() * *y).sum()
}

pub fn norm<T: Scalar>(a: &[T]) -> f64 {
    a.iter().map(|x| x.modulus_sqr()).sum::<f64>().sqrt()
}
