//! Functions to reduce: analytic test functions and the elliptic PDE
//! demonstration with adjoint gradients.

mod functions;
mod kl;
mod pde;

pub use functions::{builtin_test_functions, RidgeProfile, TestFunction};
pub use kl::KlExpansion;
pub use pde::{PdeConfig, PdeModel};

use nalgebra::DVector;

use crate::domain::Hyperrectangle;
use crate::error::Result;
use crate::scalar::Real;

/// A scalar function on a box with a way to compute its gradient.
///
/// Implementors are shared read-only across worker threads.
pub trait Model<T: Real>: Sync {
    fn name(&self) -> &str;

    fn domain(&self) -> &Hyperrectangle<T>;

    fn dim(&self) -> usize {
        self.domain().dim()
    }

    fn value(&self, s: &DVector<T>) -> Result<T>;

    fn gradient(&self, s: &DVector<T>) -> Result<DVector<T>>;

    fn value_and_gradient(&self, s: &DVector<T>) -> Result<(T, DVector<T>)> {
        Ok((self.value(s)?, self.gradient(s)?))
    }
}
