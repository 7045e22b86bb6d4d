//! Sparse LU solves with symbolic-factorization reuse.
//!
//! The MNA sparsity pattern is fixed per topology, so the fill-reducing
//! analysis runs once; every stamped value set then only pays a numeric
//! factorization. One pattern serves real and complex systems alike.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::MatMut;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Scalar types the solver accepts.
pub trait Scalar: faer::traits::ComplexField + Copy {
    fn finite(&self) -> bool;
}

impl Scalar for f64 {
    fn finite(&self) -> bool {
        self.is_finite()
    }
}

impl Scalar for Complex64 {
    fn finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Square CSC pattern with its symbolic LU, reusable across value sets.
#[derive(Debug, Clone)]
pub struct SparsePattern {
    dim: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    symbolic: SymbolicLu<usize>,
}

impl SparsePattern {
    /// `col_ptr`/`row_idx` describe a square CSC pattern with sorted row
    /// indices per column.
    pub fn new(dim: usize, col_ptr: Vec<usize>, row_idx: Vec<usize>) -> Result<Self> {
        let sym = SymbolicSparseColMatRef::new_checked(dim, dim, &col_ptr, None, &row_idx);
        let symbolic = SymbolicLu::try_new(sym).map_err(|e| {
            Error::SingularSystem(format!("symbolic factorization failed: {e:?}"))
        })?;
        Ok(SparsePattern {
            dim,
            col_ptr,
            row_idx,
            symbolic,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Numeric factorization of `values` laid out on this pattern.
    pub fn factor<T: Scalar>(&self, values: &[T]) -> Result<Factored<T>> {
        debug_assert_eq!(values.len(), self.row_idx.len());
        let sym = SymbolicSparseColMatRef::new_checked(
            self.dim,
            self.dim,
            &self.col_ptr,
            None,
            &self.row_idx,
        );
        let mat = SparseColMatRef::new(sym, values);
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), mat)
            .map_err(|e| Error::SingularSystem(format!("numeric factorization failed: {e:?}")))?;
        Ok(Factored { lu, dim: self.dim })
    }
}

/// One numeric LU factorization; solves arbitrarily many RHS columns.
pub struct Factored<T: Scalar> {
    lu: Lu<usize, T>,
    dim: usize,
}

impl<T: Scalar> Factored<T> {
    /// Solves A x = b in place. `rhs` is column-major, dim x ncols.
    /// Non-finite results are reported as a singular system.
    pub fn solve_in_place(&self, rhs: &mut [T], ncols: usize) -> Result<()> {
        debug_assert_eq!(rhs.len(), self.dim * ncols);
        let view = MatMut::from_column_major_slice_mut(rhs, self.dim, ncols);
        self.lu.solve_in_place(view);
        if rhs.iter().any(|v| !v.finite()) {
            return Err(Error::SingularSystem(
                "solve produced non-finite values (matrix is singular or near-singular)".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // 2x2 system [[2, 1], [1, 3]] x = [3, 5] -> x = [0.8, 1.4]
    fn pattern_2x2() -> (SparsePattern, Vec<f64>) {
        let col_ptr = vec![0, 2, 4];
        let row_idx = vec![0, 1, 0, 1];
        let values = vec![2.0, 1.0, 1.0, 3.0];
        (SparsePattern::new(2, col_ptr, row_idx).unwrap(), values)
    }

    #[test]
    fn solves_real_system() {
        let (p, v) = pattern_2x2();
        let f = p.factor(&v).unwrap();
        let mut rhs = vec![3.0, 5.0];
        f.solve_in_place(&mut rhs, 1).unwrap();
        assert!((rhs[0] - 0.8).abs() < 1e-14);
        assert!((rhs[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn solves_complex_system_multiple_rhs() {
        let col_ptr = vec![0, 1, 2];
        let row_idx = vec![0, 1];
        let values = vec![Complex64::new(0.0, 2.0), Complex64::new(3.0, 0.0)];
        let p = SparsePattern::new(2, col_ptr, row_idx).unwrap();
        let f = p.factor(&values).unwrap();
        let mut rhs = vec![
            Complex64::new(2.0, 0.0),
            Complex64::new(6.0, 3.0),
            Complex64::new(0.0, 4.0),
            Complex64::new(0.0, 0.0),
        ];
        f.solve_in_place(&mut rhs, 2).unwrap();
        // first column: x0 = 2/(2j) = -j, x1 = (6+3j)/3 = 2+j
        assert!((rhs[0] - Complex64::new(0.0, -1.0)).norm() < 1e-14);
        assert!((rhs[1] - Complex64::new(2.0, 1.0)).norm() < 1e-14);
        // second column: x0 = 4j/2j = 2
        assert!((rhs[2] - Complex64::new(2.0, 0.0)).norm() < 1e-14);
        assert!(rhs[3].norm() < 1e-14);
    }

    #[test]
    fn pattern_reuse_across_value_sets() {
        let (p, v) = pattern_2x2();
        let f1 = p.factor(&v).unwrap();
        let v2 = vec![4.0, 2.0, 2.0, 6.0]; // doubled
        let f2 = p.factor(&v2).unwrap();
        let mut a = vec![3.0, 5.0];
        let mut b = vec![6.0, 10.0];
        f1.solve_in_place(&mut a, 1).unwrap();
        f2.solve_in_place(&mut b, 1).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_reported() {
        let col_ptr = vec![0, 2, 4];
        let row_idx = vec![0, 1, 0, 1];
        // rank 1
        let values = vec![1.0, 2.0, 2.0, 4.0];
        let p = SparsePattern::new(2, col_ptr, row_idx).unwrap();
        let r = p.factor(&values).and_then(|f| {
            let mut rhs = vec![1.0, 0.0];
            f.solve_in_place(&mut rhs, 1)
        });
        assert!(matches!(r, Err(Error::SingularSystem(_))));
    }
}
