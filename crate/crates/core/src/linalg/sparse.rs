//! Thin wrapper over faer's sparse LU.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use super::Scalar;
use crate::{Error, Result};

/// Square sparse matrix in compressed-column form.
#[derive(Debug, Clone)]
pub struct SparseMatrix<T: Scalar> {
    inner: SparseColMat<usize, T>,
}

/// Accumulates `(row, col, value)` entries; duplicates are summed.
pub struct TripletBuilder<T: Scalar> {
    nrows: usize,
    ncols: usize,
    entries: Vec<Triplet<usize, usize, T>>,
}

impl<T: Scalar> TripletBuilder<T> {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push(Triplet::new(row, col, value));
    }

    pub fn build(self) -> Result<SparseMatrix<T>> {
        let inner = SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &self.entries)
            .map_err(|e| Error::Linear(format!("sparse assembly failed: {e:?}")))?;
        Ok(SparseMatrix { inner })
    }
}

impl<T: Scalar> SparseMatrix<T> {
    pub fn nrows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.inner.ncols()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::real(0.0); self.nrows()];
        let sym = self.inner.symbolic();
        let cp = sym.col_ptr();
        let ri = sym.row_idx();
        let val = self.inner.val();
        for (j, &xj) in x.iter().enumerate() {
            for p in cp[j]..cp[j + 1] {
                y[ri[p]] += val[p] * xj;
            }
        }
        y
    }

    /// Iterate over stored entries as `(row, col, value)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        let sym = self.inner.symbolic();
        let cp = sym.col_ptr();
        let ri = sym.row_idx();
        let val = self.inner.val();
        (0..self.ncols()).flat_map(move |j| (cp[j]..cp[j + 1]).map(move |p| (ri[p], j, val[p])))
    }

    pub fn factor(&self) -> Result<SparseLu<T>> {
        let lu = self
            .inner
            .sp_lu()
            .map_err(|e| Error::Linear(format!("sparse LU failed: {e:?}")))?;
        Ok(SparseLu { lu, n: self.nrows() })
    }
}

pub struct SparseLu<T: Scalar> {
    lu: Lu<usize, T>,
    n: usize,
}

impl<T: Scalar> SparseLu<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut m = Mat::<T>::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(m.as_mut());
        (0..self.n).map(|i| m[(i, 0)]).collect()
    }

    /// Solve in place for every column of `b`.
    pub fn solve_mat(&self, b: &mut Mat<T>) {
        self.lu.solve_in_place(b.as_mut());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn duplicates_are_summed_and_solve_works() {
        let mut t = TripletBuilder::<f64>::new(3, 3);
        t.push(0, 0, 1.0);
        t.push(0, 0, 1.0);
        t.push(1, 1, 3.0);
        t.push(2, 2, 4.0);
        t.push(0, 2, 1.0);
        let a = t.build().unwrap();
        assert_eq!(a.matvec(&[1.0, 1.0, 1.0]), vec![3.0, 3.0, 4.0]);
        let x = a.factor().unwrap().solve(&[3.0, 3.0, 4.0]);
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn complex_solve() {
        let mut t = TripletBuilder::<Complex64>::new(2, 2);
        t.push(0, 0, Complex64::new(1.0, 1.0));
        t.push(1, 0, Complex64::new(0.0, 2.0));
        t.push(1, 1, Complex64::new(3.0, 0.0));
        let a = t.build().unwrap();
        let b = a.matvec(&[Complex64::new(1.0, -1.0), Complex64::new(0.5, 0.25)]);
        let x = a.factor().unwrap().solve(&b);
        assert!((x[0] - Complex64::new(1.0, -1.0)).norm() < 1e-14);
        assert!((x[1] - Complex64::new(0.5, 0.25)).norm() < 1e-14);
    }
}
