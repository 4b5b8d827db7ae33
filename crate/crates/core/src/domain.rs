//! Axis-aligned boxes used as input domains.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A hyperrectangle `{ s : lower <= s <= upper }` with nonempty interior.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperrectangle<T: Real> {
    lower: DVector<T>,
    upper: DVector<T>,
}

impl<T: Real> Hyperrectangle<T> {
    pub fn new(lower: DVector<T>, upper: DVector<T>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidInput("hyperrectangle of dimension 0".into()));
        }
        for (i, (&l, &u)) in lower.iter().zip(upper.iter()).enumerate() {
            if !l.finite() || !u.finite() {
                return Err(Error::NonFinite("hyperrectangle bounds"));
            }
            if l >= u {
                return Err(Error::InvalidInput(format!(
                    "empty interval in coordinate {i}: [{l}, {u}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The box `[-half_width, half_width]^dim`.
    pub fn symmetric(dim: usize, half_width: T) -> Result<Self> {
        Self::new(
            DVector::from_element(dim, -half_width),
            DVector::from_element(dim, half_width),
        )
    }

    pub fn from_slices(lower: &[T], upper: &[T]) -> Result<Self> {
        Self::new(
            DVector::from_column_slice(lower),
            DVector::from_column_slice(upper),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<T> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<T> {
        &self.upper
    }

    pub fn volume(&self) -> T {
        self.lower
            .iter()
            .zip(self.upper.iter())
            .fold(T::one(), |acc, (&l, &u)| acc * (u - l))
    }

    pub fn center(&self) -> DVector<T> {
        (&self.lower + &self.upper) * T::lit(0.5)
    }

    /// Largest `|lower_i + upper_i| / 2` relative to the coordinate scale.
    pub fn center_offset(&self) -> T {
        self.lower
            .iter()
            .zip(self.upper.iter())
            .map(|(&l, &u)| (l + u).abs() * T::lit(0.5) / (T::one() + u.abs().max(l.abs())))
            .fold(T::zero(), |a, b| a.max(b))
    }

    pub fn is_centered(&self, tol: T) -> bool {
        self.center_offset() <= tol
    }

    /// Membership with an absolute slack `tol` on every bound.
    pub fn contains(&self, s: &DVector<T>, tol: T) -> bool {
        s.len() == self.dim()
            && s
                .iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(&x, (&l, &u))| x >= l - tol && x <= u + tol)
    }

    /// Largest bound violation of `s` (zero when inside).
    pub fn violation(&self, s: &DVector<T>) -> T {
        s.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .map(|(&x, (&l, &u))| (l - x).max(x - u).max(T::zero()))
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Uniform (Lebesgue) draw from the box.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<T> {
        DVector::from_iterator(
            self.dim(),
            self.lower.iter().zip(self.upper.iter()).map(|(&l, &u)| {
                let r: f64 = rng.random();
                l + (u - l) * T::lit(r)
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use std::f64::consts::PI;

    #[test]
    fn volume_of_square() {
        let b = Hyperrectangle::<f64>::symmetric(2, PI).unwrap();
        assert!((b.volume() - 4.0 * PI * PI).abs() < 1e-12);
        assert!(b.is_centered(1e-12));
    }

    #[test]
    fn rejects_empty_interval() {
        assert!(Hyperrectangle::<f64>::from_slices(&[0.0, 1.0], &[1.0, 1.0]).is_err());
        assert!(Hyperrectangle::<f64>::from_slices(&[0.0], &[1.0, 2.0]).is_err());
        assert!(Hyperrectangle::<f64>::from_slices(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn uniform_samples_stay_inside() {
        let b = Hyperrectangle::<f64>::from_slices(&[-1.0, 2.0, 0.0], &[1.0, 5.0, 1e-3]).unwrap();
        let mut rng = seeded(3);
        for _ in 0..1000 {
            let s = b.sample_uniform(&mut rng);
            assert!(b.contains(&s, 0.0));
            assert_eq!(b.violation(&s), 0.0);
        }
        assert!(!b.is_centered(1e-9));
    }
}
