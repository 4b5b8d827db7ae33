//! Dense kernels: one-sided Jacobi SVD and a banded SPD Cholesky solver.

mod banded;
mod jacobi;

pub use banded::{BandedCholesky, BandedSpd};
pub use jacobi::{column_svd, one_sided_jacobi, thin_svd, ColumnSvd, JacobiOutput, Svd};

use nalgebra::DMatrix;

use crate::scalar::Real;

/// Largest entrywise deviation of `q^T q` from the identity.
pub fn orthonormality_defect<T: Real>(q: &DMatrix<T>) -> T {
    let g = q.transpose() * q;
    let mut worst = T::zero();
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { T::one() } else { T::zero() };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Flips each column so its first entry with magnitude above `tol` is positive.
pub fn normalize_column_signs<T: Real>(m: &mut DMatrix<T>, tol: T) {
    for mut col in m.column_iter_mut() {
        if let Some(&lead) = col.iter().find(|x| x.abs() > tol) {
            if lead < T::zero() {
                col.neg_mut();
            }
        }
    }
}
