use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::Model;
use crate::domain::Hyperrectangle;
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::scalar::Real;

type ValueFn<T> = Arc<dyn Fn(&DVector<T>) -> T + Send + Sync>;
type GradFn<T> = Arc<dyn Fn(&DVector<T>) -> DVector<T> + Send + Sync>;

/// Analytic function with an exact gradient.
///
/// Construction checks the gradient against central differences at ten
/// random interior points.
#[derive(Clone)]
pub struct TestFunction<T: Real> {
    name: String,
    domain: Hyperrectangle<T>,
    eval: ValueFn<T>,
    grad: GradFn<T>,
}

impl<T: Real> fmt::Debug for TestFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("dim", &self.domain.dim())
            .finish()
    }
}

/// One-dimensional profile of a ridge function `f(s) = p(a^T s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RidgeProfile {
    Cos,
    Sin,
    Exp,
    Tanh,
    Cubic,
}

impl RidgeProfile {
    pub fn value<T: Real>(self, t: T) -> T {
        match self {
            RidgeProfile::Cos => t.cos(),
            RidgeProfile::Sin => t.sin(),
            RidgeProfile::Exp => t.exp(),
            RidgeProfile::Tanh => t.tanh(),
            RidgeProfile::Cubic => t * t * t / T::lit(3.0) + t,
        }
    }

    pub fn derivative<T: Real>(self, t: T) -> T {
        match self {
            RidgeProfile::Cos => -t.sin(),
            RidgeProfile::Sin => t.cos(),
            RidgeProfile::Exp => t.exp(),
            RidgeProfile::Tanh => {
                let th = t.tanh();
                T::one() - th * th
            }
            RidgeProfile::Cubic => t * t + T::one(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RidgeProfile::Cos => "cos",
            RidgeProfile::Sin => "sin",
            RidgeProfile::Exp => "exp",
            RidgeProfile::Tanh => "tanh",
            RidgeProfile::Cubic => "cubic",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub const ALL: [RidgeProfile; 5] = [
        RidgeProfile::Cos,
        RidgeProfile::Sin,
        RidgeProfile::Exp,
        RidgeProfile::Tanh,
        RidgeProfile::Cubic,
    ];
}

impl<T: Real> TestFunction<T> {
    pub fn new<F, G>(name: impl Into<String>, domain: Hyperrectangle<T>, eval: F, grad: G) -> Result<Self>
    where
        F: Fn(&DVector<T>) -> T + Send + Sync + 'static,
        G: Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
    {
        let f = Self {
            name: name.into(),
            domain,
            eval: Arc::new(eval),
            grad: Arc::new(grad),
        };
        f.check_gradient()?;
        Ok(f)
    }

    fn check_gradient(&self) -> Result<()> {
        let eps = T::default_epsilon();
        let step = eps.cbrt();
        let tol = T::lit(1e-4).max(eps.sqrt());
        let mut rng = seeded(0x5eed);
        for _ in 0..10 {
            let s = self.domain.sample_uniform(&mut rng);
            let g = (self.grad)(&s);
            if g.len() != self.domain.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.domain.dim(),
                    found: g.len(),
                });
            }
            let mut fd = DVector::zeros(g.len());
            for i in 0..g.len() {
                let h = step * T::one().max(s[i].abs());
                let mut plus = s.clone();
                plus[i] += h;
                let mut minus = s.clone();
                minus[i] -= h;
                fd[i] = ((self.eval)(&plus) - (self.eval)(&minus)) / (h + h);
            }
            let err = (&fd - &g).norm();
            if !(err <= tol * (T::one() + g.norm())) {
                return Err(Error::InvalidInput(format!(
                    "gradient of {} disagrees with finite differences ({err})",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// `cos(s1 + s2)` on `[-π, π]^2`.
    pub fn cos_sum() -> Self {
        Self::new(
            "cos_sum",
            Hyperrectangle::symmetric(2, T::pi()).expect("valid box"),
            |s| (s[0] + s[1]).cos(),
            |s| {
                let g = -(s[0] + s[1]).sin();
                DVector::from_vec(vec![g, g])
            },
        )
        .expect("analytic gradient")
    }

    /// `cos(0.3 s1 + 0.7 s2)` on `[-π, π]^2`.
    pub fn cos_weighted() -> Self {
        let (w1, w2) = (T::lit(0.3), T::lit(0.7));
        Self::new(
            "cos_weighted",
            Hyperrectangle::symmetric(2, T::pi()).expect("valid box"),
            move |s| (w1 * s[0] + w2 * s[1]).cos(),
            move |s| {
                let g = -(w1 * s[0] + w2 * s[1]).sin();
                DVector::from_vec(vec![w1 * g, w2 * g])
            },
        )
        .expect("analytic gradient")
    }

    /// Ridge function `p(a^T s)`.
    pub fn ridge(direction: DVector<T>, profile: RidgeProfile, domain: Hyperrectangle<T>) -> Result<Self> {
        if direction.len() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                found: direction.len(),
            });
        }
        let a = direction.clone();
        Self::new(
            format!("ridge_{}", profile.name()),
            domain,
            move |s| profile.value(direction.dot(s)),
            move |s| &a * profile.derivative(a.dot(s)),
        )
    }

    /// Quadratic `½ s^T A s` with symmetric `A`.
    pub fn quadratic(a: DMatrix<T>, domain: Hyperrectangle<T>) -> Result<Self> {
        if a.shape() != (domain.dim(), domain.dim()) {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                found: a.nrows(),
            });
        }
        if (&a - a.transpose()).amax() > T::lit(1e-12) * (T::one() + a.amax()) {
            return Err(Error::InvalidInput("quadratic form must be symmetric".into()));
        }
        let a2 = a.clone();
        Self::new(
            "quadratic",
            domain,
            move |s| s.dot(&(&a * s)) * T::lit(0.5),
            move |s| &a2 * s,
        )
    }

    pub fn eval(&self, s: &DVector<T>) -> T {
        (self.eval)(s)
    }

    pub fn grad(&self, s: &DVector<T>) -> DVector<T> {
        (self.grad)(s)
    }
}

impl<T: Real> Model<T> for TestFunction<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn domain(&self) -> &Hyperrectangle<T> {
        &self.domain
    }

    fn value(&self, s: &DVector<T>) -> Result<T> {
        Ok(self.eval(s))
    }

    fn gradient(&self, s: &DVector<T>) -> Result<DVector<T>> {
        Ok(self.grad(s))
    }
}

/// The standard catalog: both cosine examples, an exponential ridge in four
/// dimensions and the quadratic with `A = diag(1, 0)`.
pub fn builtin_test_functions<T: Real>() -> Vec<TestFunction<T>> {
    let unit4 = Hyperrectangle::symmetric(4, T::one()).expect("valid box");
    let unit2 = Hyperrectangle::symmetric(2, T::one()).expect("valid box");
    let a = DVector::from_vec(vec![T::lit(0.5), T::lit(-0.3), T::lit(0.2), T::lit(0.1)]);
    vec![
        TestFunction::cos_sum(),
        TestFunction::cos_weighted(),
        TestFunction::ridge(a, RidgeProfile::Exp, unit4).expect("valid ridge"),
        TestFunction::quadratic(
            DMatrix::from_diagonal(&DVector::from_vec(vec![T::one(), T::zero()])),
            unit2,
        )
        .expect("valid quadratic"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_gradients() {
        let f = TestFunction::<f64>::cos_sum();
        let s = DVector::from_vec(vec![0.3, -0.2]);
        let g = f.grad(&s);
        assert!((g[0] + (0.1f64).sin()).abs() < 1e-15);
        assert_eq!(g[1], g[0]);

        let f = TestFunction::<f64>::cos_weighted();
        let g = f.grad(&s);
        let arg: f64 = 0.3 * 0.3 + 0.7 * -0.2;
        assert!((g[0] + 0.3 * arg.sin()).abs() < 1e-15);
        assert!((g[1] + 0.7 * arg.sin()).abs() < 1e-15);
    }

    #[test]
    fn wrong_gradient_is_rejected() {
        let dom = Hyperrectangle::<f64>::symmetric(1, 1.0).unwrap();
        let r = TestFunction::new("bad", dom, |s| s[0] * s[0], |s| DVector::from_vec(vec![s[0]]));
        assert!(r.is_err());
    }

    #[test]
    fn asymmetric_quadratic_is_rejected() {
        let dom = Hyperrectangle::<f64>::symmetric(2, 1.0).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(TestFunction::quadratic(a, dom).is_err());
    }

    #[test]
    fn every_profile_passes_self_check() {
        let dom = Hyperrectangle::<f64>::symmetric(3, 1.0).unwrap();
        for p in RidgeProfile::ALL {
            let a = DVector::from_vec(vec![0.4, -0.9, 0.25]);
            TestFunction::ridge(a, p, dom.clone()).unwrap();
        }
    }

    #[test]
    fn catalog_builds_in_both_precisions() {
        assert_eq!(builtin_test_functions::<f64>().len(), 4);
        assert_eq!(builtin_test_functions::<f32>().len(), 4);
    }
}
