//! Elliptic model problem `-∇·(α ∇u) = 1` on the unit square.
//!
//! Cell-centered finite volumes on an `n x n` grid: face transmissibilities
//! are harmonic means of the neighboring coefficients, the left, top and
//! bottom sides carry homogeneous Dirichlet conditions (half-cell distance)
//! and the right side is insulated. The quantity of interest is the mean of
//! `u` over the cells along the right side. Gradients with respect to the KL
//! parameters come from one forward and one adjoint solve.

use nalgebra::DVector;

use super::kl::KlExpansion;
use super::Model;
use crate::domain::Hyperrectangle;
use crate::error::{Error, Result};
use crate::linalg::{BandedCholesky, BandedSpd};
use crate::scalar::Real;

/// Grid and parameterization of the PDE demonstration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeConfig {
    /// Cells per side.
    pub n: usize,
    /// Number of KL modes (parameter dimension).
    pub d: usize,
    pub rho: (f64, f64),
    /// Parameters range over `[-half_width, half_width]^d`.
    pub half_width: f64,
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self {
            n: 33,
            d: 50,
            rho: (1.0, 0.05),
            half_width: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PdeModel<T: Real> {
    n: usize,
    kl: KlExpansion<T>,
    /// `φ_i sqrt(σ_i)` at every cell; `log α = modes * s`.
    modes: nalgebra::DMatrix<T>,
    dirichlet_mask: Vec<bool>,
    neumann_mask: Vec<bool>,
    qoi_weights: DVector<T>,
    load: DVector<T>,
    domain: Hyperrectangle<T>,
}

impl<T: Real> PdeModel<T> {
    pub fn new(config: &PdeConfig) -> Result<Self> {
        let kl = KlExpansion::build(config.n, config.d, (T::lit(config.rho.0), T::lit(config.rho.1)))?;
        Self::with_expansion(kl, T::lit(config.half_width))
    }

    pub fn with_expansion(kl: KlExpansion<T>, half_width: T) -> Result<Self> {
        let n = kl.grid_size();
        let d = kl.truncation();
        let mut modes = kl.eigenfunctions().clone();
        for (i, mut col) in modes.column_iter_mut().enumerate() {
            col.scale_mut(kl.eigenvalues()[i].sqrt());
        }
        let cells = n * n;
        let dirichlet_mask: Vec<bool> = (0..cells)
            .map(|p| {
                let (i, j) = (p % n, p / n);
                i == 0 || j == 0 || j == n - 1
            })
            .collect();
        let neumann_mask: Vec<bool> = (0..cells).map(|p| p % n == n - 1).collect();
        let w = T::one() / T::from_count(n);
        let qoi_weights = DVector::from_iterator(
            cells,
            neumann_mask.iter().map(|&on| if on { w } else { T::zero() }),
        );
        let h = T::one() / T::from_count(n);
        Ok(Self {
            n,
            kl,
            modes,
            dirichlet_mask,
            neumann_mask,
            qoi_weights,
            load: DVector::from_element(cells, h * h),
            domain: Hyperrectangle::symmetric(d, half_width)?,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn kl(&self) -> &KlExpansion<T> {
        &self.kl
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet_mask
    }

    pub fn neumann_mask(&self) -> &[bool] {
        &self.neumann_mask
    }

    pub fn qoi_weights(&self) -> &DVector<T> {
        &self.qoi_weights
    }

    /// Right-hand side `f` (unit source integrated over each cell).
    pub fn load_vector(&self) -> &DVector<T> {
        &self.load
    }

    fn check_parameters(&self, s: &DVector<T>) -> Result<()> {
        if s.len() != self.domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.domain.dim(),
                found: s.len(),
            });
        }
        if s.iter().any(|x| !x.finite()) {
            return Err(Error::NonFinite("PDE parameters"));
        }
        if !self.domain.contains(s, T::lit(1e-12) * self.domain.upper()[0]) {
            return Err(Error::InvalidInput("parameters outside the parameter box".into()));
        }
        Ok(())
    }

    /// `α = exp(Σ φ_i sqrt(σ_i) s_i)` at every cell.
    pub fn coefficient_field(&self, s: &DVector<T>) -> Result<DVector<T>> {
        self.check_parameters(s)?;
        Ok((&self.modes * s).map(|x| x.exp()))
    }

    /// Stiffness matrix for a given coefficient field.
    pub fn assemble(&self, alpha: &DVector<T>) -> BandedSpd<T> {
        let n = self.n;
        let two = T::lit(2.0);
        let mut k = BandedSpd::zeros(n * n, n);
        for p in 0..n * n {
            let (i, j) = (p % n, p / n);
            if i + 1 < n {
                let t = harmonic(alpha[p], alpha[p + 1]);
                k.add(p, p, t);
                k.add(p + 1, p + 1, t);
                k.add(p + 1, p, -t);
            }
            if j + 1 < n {
                let t = harmonic(alpha[p], alpha[p + n]);
                k.add(p, p, t);
                k.add(p + n, p + n, t);
                k.add(p + n, p, -t);
            }
            let walls = usize::from(i == 0) + usize::from(j == 0) + usize::from(j == n - 1);
            if walls > 0 {
                k.add(p, p, two * alpha[p] * T::from_count(walls));
            }
        }
        k
    }

    /// Stiffness matrix `K(s)`.
    pub fn stiffness(&self, s: &DVector<T>) -> Result<BandedSpd<T>> {
        Ok(self.assemble(&self.coefficient_field(s)?))
    }

    /// `∂K/∂s_i`, assembled on demand.
    pub fn stiffness_derivative(&self, s: &DVector<T>, i: usize) -> Result<BandedSpd<T>> {
        let alpha = self.coefficient_field(s)?;
        let dalpha = DVector::from_fn(alpha.len(), |p, _| self.modes[(p, i)] * alpha[p]);
        let n = self.n;
        let two = T::lit(2.0);
        let mut dk = BandedSpd::zeros(n * n, n);
        for p in 0..n * n {
            let (ci, cj) = (p % n, p / n);
            for (q, ok) in [(p + 1, ci + 1 < n), (p + n, cj + 1 < n)] {
                if ok {
                    let (ha, hb) = harmonic_partials(alpha[p], alpha[q]);
                    let dt = ha * dalpha[p] + hb * dalpha[q];
                    dk.add(p, p, dt);
                    dk.add(q, q, dt);
                    dk.add(q, p, -dt);
                }
            }
            let walls = usize::from(ci == 0) + usize::from(cj == 0) + usize::from(cj == n - 1);
            if walls > 0 {
                dk.add(p, p, two * dalpha[p] * T::from_count(walls));
            }
        }
        Ok(dk)
    }

    fn factor(&self, alpha: &DVector<T>) -> Result<BandedCholesky<T>> {
        self.assemble(alpha).cholesky()
    }

    /// Solves `K u = f`.
    pub fn solve_forward(&self, s: &DVector<T>) -> Result<DVector<T>> {
        let alpha = self.coefficient_field(s)?;
        Ok(self.factor(&alpha)?.solve(&self.load))
    }

    /// `Q = c^T u`.
    pub fn qoi(&self, u: &DVector<T>) -> T {
        self.qoi_weights.dot(u)
    }

    /// Solves `K^T y = c` (`K` is symmetric).
    pub fn solve_adjoint(&self, s: &DVector<T>) -> Result<DVector<T>> {
        let alpha = self.coefficient_field(s)?;
        Ok(self.factor(&alpha)?.solve(&self.qoi_weights))
    }

    /// `Q(s)` and `∂Q/∂s_i = -y^T (∂K/∂s_i) u` from one factorization.
    pub fn qoi_and_gradient(&self, s: &DVector<T>) -> Result<(T, DVector<T>)> {
        let alpha = self.coefficient_field(s)?;
        let chol = self.factor(&alpha)?;
        let u = chol.solve(&self.load);
        let y = chol.solve(&self.qoi_weights);

        // sensitivity of y^T K u to each cell coefficient
        let n = self.n;
        let two = T::lit(2.0);
        let mut dk_dalpha = DVector::zeros(n * n);
        for p in 0..n * n {
            let (i, j) = (p % n, p / n);
            for (q, ok) in [(p + 1, i + 1 < n), (p + n, j + 1 < n)] {
                if ok {
                    let jump = (y[p] - y[q]) * (u[p] - u[q]);
                    let (ha, hb) = harmonic_partials(alpha[p], alpha[q]);
                    dk_dalpha[p] += ha * jump;
                    dk_dalpha[q] += hb * jump;
                }
            }
            let walls = usize::from(i == 0) + usize::from(j == 0) + usize::from(j == n - 1);
            if walls > 0 {
                dk_dalpha[p] += two * T::from_count(walls) * y[p] * u[p];
            }
        }
        // ∂α_p/∂s_i = modes[p, i] α_p
        let weighted = dk_dalpha.component_mul(&alpha);
        let grad = -self.modes.tr_mul(&weighted);
        Ok((self.qoi(&u), grad))
    }

    pub fn gradient_q(&self, s: &DVector<T>) -> Result<DVector<T>> {
        Ok(self.qoi_and_gradient(s)?.1)
    }

    pub fn evaluate_q(&self, s: &DVector<T>) -> Result<T> {
        Ok(self.qoi(&self.solve_forward(s)?))
    }
}

#[inline]
fn harmonic<T: Real>(a: T, b: T) -> T {
    T::lit(2.0) * a * b / (a + b)
}

/// Partial derivatives of the harmonic mean with respect to each argument.
#[inline]
fn harmonic_partials<T: Real>(a: T, b: T) -> (T, T) {
    let s = a + b;
    let s2 = s * s;
    (T::lit(2.0) * b * b / s2, T::lit(2.0) * a * a / s2)
}

impl<T: Real> Model<T> for PdeModel<T> {
    fn name(&self) -> &str {
        "pde"
    }

    fn domain(&self) -> &Hyperrectangle<T> {
        &self.domain
    }

    fn value(&self, s: &DVector<T>) -> Result<T> {
        self.evaluate_q(s)
    }

    fn gradient(&self, s: &DVector<T>) -> Result<DVector<T>> {
        self.gradient_q(s)
    }

    fn value_and_gradient(&self, s: &DVector<T>) -> Result<(T, DVector<T>)> {
        self.qoi_and_gradient(s)
    }
}
