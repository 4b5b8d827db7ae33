//! Gradient sampling: exact/adjoint gradients at uniform sites, finite
//! difference fallback, and the root-mean-square directional variation.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

use crate::domain::Hyperrectangle;
use crate::error::{Error, Result};
use crate::models::Model;
use crate::scalar::Real;
use crate::subspace::JacobianSamples;

/// Jacobian samples together with the function values at the same sites.
#[derive(Debug, Clone)]
pub struct SampledGradients<T: Real> {
    pub samples: JacobianSamples<T>,
    pub values: Vec<T>,
    /// Function evaluations spent (one per site for exact gradients).
    pub evaluations: usize,
}

/// Draws `k` uniform sites sequentially from `rng`, then evaluates values and
/// gradients at them in parallel. Results are independent of the thread count.
pub fn sample_gradients<T, M, R>(model: &M, k: usize, rng: &mut R) -> Result<SampledGradients<T>>
where
    T: Real,
    M: Model<T> + ?Sized,
    R: Rng + ?Sized,
{
    if k == 0 {
        return Err(Error::EmptySamples);
    }
    let domain = model.domain();
    let points: Vec<DVector<T>> = (0..k).map(|_| domain.sample_uniform(rng)).collect();
    let evaluated: Vec<(T, DVector<T>)> = points
        .par_iter()
        .map(|s| model.value_and_gradient(s))
        .collect::<Result<_>>()?;
    let (values, gradients): (Vec<T>, Vec<DVector<T>>) = evaluated.into_iter().unzip();
    Ok(SampledGradients {
        samples: JacobianSamples::from_gradients(points, &gradients, domain)?,
        values,
        evaluations: k,
    })
}

/// Same as [`sample_gradients`] but every gradient is a boundary-aware
/// forward difference of `model.value`.
pub fn sample_fd_gradients<T, M, R>(
    model: &M,
    k: usize,
    step: FdStep<T>,
    rng: &mut R,
) -> Result<SampledGradients<T>>
where
    T: Real,
    M: Model<T> + ?Sized,
    R: Rng + ?Sized,
{
    if k == 0 {
        return Err(Error::EmptySamples);
    }
    let domain = model.domain();
    let points: Vec<DVector<T>> = (0..k).map(|_| domain.sample_uniform(rng)).collect();
    let evaluated: Vec<FdGradient<T>> = points
        .par_iter()
        .map(|s| finite_difference_gradient(|x| model.value(x), domain, s, step))
        .collect::<Result<_>>()?;
    let evaluations = evaluated.iter().map(|g| g.evaluations).sum();
    let values = evaluated.iter().map(|g| g.value).collect();
    let gradients: Vec<DVector<T>> = evaluated.into_iter().map(|g| g.gradient).collect();
    Ok(SampledGradients {
        samples: JacobianSamples::from_gradients(points, &gradients, domain)?,
        values,
        evaluations,
    })
}

/// Finite difference step rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FdStep<T> {
    /// `1e-6 * max(1, |s_i|)` per coordinate.
    Relative,
    Fixed(T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdGradient<T: Real> {
    pub gradient: DVector<T>,
    /// `f(s)`.
    pub value: T,
    pub evaluations: usize,
    /// Coordinates that used a backward difference.
    pub backward: Vec<usize>,
}

/// Forward differences `(f(s + h e_i) − f(s)) / h`, switching to a backward
/// difference for coordinates where `s_i + h` leaves the domain. Spends
/// exactly `d + 1` evaluations.
pub fn finite_difference_gradient<T, F>(
    f: F,
    domain: &Hyperrectangle<T>,
    s: &DVector<T>,
    step: FdStep<T>,
) -> Result<FdGradient<T>>
where
    T: Real,
    F: Fn(&DVector<T>) -> Result<T>,
{
    let d = domain.dim();
    if s.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: s.len(),
        });
    }
    if !domain.contains(s, T::zero()) {
        return Err(Error::InvalidInput("finite difference base point outside the domain".into()));
    }
    let checked = |x: &DVector<T>| -> Result<T> {
        let v = f(x)?;
        if v.finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("function value"))
        }
    };
    let f0 = checked(s)?;
    let mut gradient = DVector::zeros(d);
    let mut backward = Vec::new();
    let mut probe = s.clone();
    for i in 0..d {
        let h = match step {
            FdStep::Relative => T::lit(1e-6) * T::one().max(s[i].abs()),
            FdStep::Fixed(h) => h,
        };
        if !(h > T::zero()) {
            return Err(Error::InvalidInput("finite difference step must be positive".into()));
        }
        let forward = s[i] + h <= domain.upper()[i];
        probe[i] = if forward { s[i] + h } else { s[i] - h };
        let fi = checked(&probe)?;
        probe[i] = s[i];
        gradient[i] = if forward { (fi - f0) / h } else { (f0 - fi) / h };
        if !forward {
            backward.push(i);
        }
    }
    Ok(FdGradient {
        gradient,
        value: f0,
        evaluations: d + 1,
        backward,
    })
}

/// `sqrt(mean (f(s + h v) − f(s))²)` over `n` uniform `s` with `s + h v` in
/// the domain (sites are redrawn until the shifted point fits).
pub fn rms_directional_variation<T, F, R>(
    f: F,
    domain: &Hyperrectangle<T>,
    direction: &DVector<T>,
    h: T,
    n: usize,
    rng: &mut R,
) -> Result<T>
where
    T: Real,
    F: Fn(&DVector<T>) -> T,
    R: Rng + ?Sized,
{
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    if direction.len() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            found: direction.len(),
        });
    }
    if (direction.norm() - T::one()).abs() > T::lit(1e-10) {
        return Err(Error::InvalidInput("direction must have unit length".into()));
    }
    let shift = direction * h;
    let mut total = T::zero();
    let mut accepted = 0usize;
    let mut draws = 0usize;
    let limit = 1000 * n;
    while accepted < n {
        if draws >= limit {
            return Err(Error::InvalidInput("step too large for the domain".into()));
        }
        draws += 1;
        let s = domain.sample_uniform(rng);
        let t = &s + &shift;
        if !domain.contains(&t, T::zero()) {
            continue;
        }
        let diff = f(&t) - f(&s);
        total += diff * diff;
        accepted += 1;
    }
    Ok((total / T::from_count(n)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::TestFunction;
    use crate::rng::seeded;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn square() -> Hyperrectangle<f64> {
        Hyperrectangle::symmetric(2, PI).unwrap()
    }

    #[test]
    fn linear_function_is_exact() {
        let dom = Hyperrectangle::<f64>::symmetric(3, 1.0).unwrap();
        let s = DVector::from_vec(vec![0.2, -0.4, 0.9]);
        for step in [FdStep::Relative, FdStep::Fixed(0.01), FdStep::Fixed(0.5)] {
            let g = finite_difference_gradient(|x| Ok(x[0]), &dom, &s, step).unwrap();
            assert!((g.gradient[0] - 1.0).abs() < 1e-9);
            assert_eq!(g.gradient[1], 0.0);
            assert_eq!(g.gradient[2], 0.0);
            assert_eq!(g.evaluations, 4);
        }
    }

    #[test]
    fn cosine_gradient_interior_and_boundary() {
        let f = |x: &DVector<f64>| Ok((x[0] + x[1]).cos());
        let exact = |x: &DVector<f64>| -(x[0] + x[1]).sin();
        let s = DVector::from_vec(vec![0.3, -0.2]);
        let g = finite_difference_gradient(f, &square(), &s, FdStep::Fixed(1e-6)).unwrap();
        for i in 0..2 {
            assert!((g.gradient[i] - exact(&s)).abs() < 1e-5);
        }
        assert!(g.backward.is_empty());

        let s = DVector::from_vec(vec![PI, 0.4]);
        let h = 1e-6;
        let g = finite_difference_gradient(f, &square(), &s, FdStep::Fixed(h)).unwrap();
        assert_eq!(g.backward, vec![0]);
        for i in 0..2 {
            assert!((g.gradient[i] - exact(&s)).abs() < 10.0 * h);
        }
    }

    #[test]
    fn non_finite_values_are_errors() {
        let dom = Hyperrectangle::<f64>::symmetric(2, 1.0).unwrap();
        let s = DVector::zeros(2);
        let r = finite_difference_gradient(|x| Ok(1.0 / x[0]), &dom, &s, FdStep::Relative);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn rms_examples() {
        let dom = square();
        let mut rng = seeded(1);
        let v = DVector::from_vec(vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
        let c = rms_directional_variation(|_| 3.0, &dom, &v, 1e-3, 100, &mut rng).unwrap();
        assert_eq!(c, 0.0);

        let null = DVector::from_vec(vec![-FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
        let r = rms_directional_variation(|x| (x[0] + x[1]).cos(), &dom, &null, 1e-3, 1000, &mut rng)
            .unwrap();
        assert!(r < 1e-12);

        // mean squared directional derivative along v is λ_1/|Ω| = 1
        let h = 1e-3;
        let r = rms_directional_variation(|x| (x[0] + x[1]).cos(), &dom, &v, h, 20000, &mut rng)
            .unwrap();
        assert!((r / h - 1.0).abs() < 0.05, "{}", r / h);

        assert!(rms_directional_variation(|_| 0.0, &dom, &v, h, 0, &mut rng).is_err());
    }

    #[test]
    fn exact_and_fd_sampling_agree() {
        let f = TestFunction::<f64>::cos_weighted();
        let exact = sample_gradients(&f, 30, &mut seeded(4)).unwrap();
        let fd = sample_fd_gradients(&f, 30, FdStep::Relative, &mut seeded(4)).unwrap();
        assert_eq!(exact.samples.points(), fd.samples.points());
        assert!((exact.samples.jacobian() - fd.samples.jacobian()).amax() < 1e-5);
        assert_eq!(fd.evaluations, 30 * 3);
        assert_eq!(exact.values, fd.values);
        assert!(sample_gradients(&f, 0, &mut seeded(4)).is_err());
    }
}
