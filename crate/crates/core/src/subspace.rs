//! Derivative outer-product matrix estimation and active subspace extraction.
//!
//! Given gradients `j(s_i)` at `k` points drawn uniformly from a box `Ω`, the
//! matrix `C = ∫ j j^T ds` is estimated by `(|Ω|/k) J J^T`. Its eigenvectors
//! rank directions by mean squared directional derivative. The main path never
//! forms the product: the eigenpairs come from the SVD of `sqrt(|Ω|/k) J`.

use nalgebra::{DMatrix, DVector};

use crate::domain::Hyperrectangle;
use crate::error::{Error, Result};
use crate::linalg::{column_svd, normalize_column_signs, orthonormality_defect, thin_svd};
use crate::scalar::Real;

const SIGN_TOL: f64 = 1e-12;
const EIGEN_CLAMP: f64 = 1e-12;

/// Sample sites and the `d x k` matrix whose column `i` is the gradient at
/// site `i`.
#[derive(Debug, Clone)]
pub struct JacobianSamples<T: Real> {
    points: Vec<DVector<T>>,
    jacobian: DMatrix<T>,
}

impl<T: Real> JacobianSamples<T> {
    /// Validates shapes and that every site lies in `domain`.
    pub fn new(
        points: Vec<DVector<T>>,
        jacobian: DMatrix<T>,
        domain: &Hyperrectangle<T>,
    ) -> Result<Self> {
        if points.len() != jacobian.ncols() {
            return Err(Error::DimensionMismatch {
                expected: jacobian.ncols(),
                found: points.len(),
            });
        }
        if jacobian.nrows() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                found: jacobian.nrows(),
            });
        }
        let scale = domain
            .lower()
            .iter()
            .chain(domain.upper().iter())
            .fold(T::one(), |a, &b| a.max(b.abs()));
        for p in &points {
            if p.len() != domain.dim() {
                return Err(Error::DimensionMismatch {
                    expected: domain.dim(),
                    found: p.len(),
                });
            }
            if !domain.contains(p, T::lit(1e-12) * scale) {
                return Err(Error::InvalidInput("sample site outside the domain".into()));
            }
        }
        Ok(Self { points, jacobian })
    }

    /// Builds from per-site gradient vectors.
    pub fn from_gradients(
        points: Vec<DVector<T>>,
        gradients: &[DVector<T>],
        domain: &Hyperrectangle<T>,
    ) -> Result<Self> {
        let d = domain.dim();
        if let Some(g) = gradients.iter().find(|g| g.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: g.len(),
            });
        }
        let jacobian = DMatrix::from_fn(d, gradients.len(), |i, j| gradients[j][i]);
        Self::new(points, jacobian, domain)
    }

    pub fn points(&self) -> &[DVector<T>] {
        &self.points
    }

    pub fn jacobian(&self) -> &DMatrix<T> {
        &self.jacobian
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.jacobian.nrows()
    }

    /// The first `m` samples.
    pub fn prefix(&self, m: usize) -> Self {
        let m = m.min(self.len());
        Self {
            points: self.points[..m].to_vec(),
            jacobian: self.jacobian.columns(0, m).into_owned(),
        }
    }

    fn check_for(&self, domain: &Hyperrectangle<T>) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptySamples);
        }
        if self.dim() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                found: self.dim(),
            });
        }
        if self.jacobian.iter().any(|x| !x.finite()) {
            return Err(Error::NonFinite("Jacobian samples"));
        }
        Ok(())
    }
}

/// Monte Carlo estimate `(|Ω|/k) J J^T`.
pub fn estimate_c_hat<T: Real>(
    samples: &JacobianSamples<T>,
    domain: &Hyperrectangle<T>,
) -> Result<DMatrix<T>> {
    samples.check_for(domain)?;
    let j = samples.jacobian();
    let scale = domain.volume() / T::from_count(samples.len());
    let mut c = j * j.transpose() * scale;
    // exact symmetry
    let d = c.nrows();
    for col in 0..d {
        for row in col + 1..d {
            let avg = (c[(row, col)] + c[(col, row)]) * T::lit(0.5);
            c[(row, col)] = avg;
            c[(col, row)] = avg;
        }
    }
    Ok(c)
}

/// Orthonormal eigenbasis `[V_a | V_b]` with eigenvalues sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSubspace<T: Real> {
    basis_a: DMatrix<T>,
    basis_b: DMatrix<T>,
    eigenvalues: DVector<T>,
}

impl<T: Real> ActiveSubspace<T> {
    /// Assembles a subspace from an orthogonal `d x d` basis split after
    /// `a` columns, validating orthogonality and ordering.
    pub fn from_parts(basis: DMatrix<T>, eigenvalues: DVector<T>, a: usize) -> Result<Self> {
        let d = basis.nrows();
        if basis.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: basis.ncols(),
            });
        }
        if eigenvalues.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: eigenvalues.len(),
            });
        }
        if a < 1 || a > d {
            return Err(Error::OutOfRange {
                what: "truncation",
                value: a,
                lo: 1,
                hi: d,
            });
        }
        let defect = orthonormality_defect(&basis);
        if defect > T::lit(1e-8) {
            return Err(Error::NotOrthonormal(defect.as_f64()));
        }
        if eigenvalues.as_slice().windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput("eigenvalues not sorted descending".into()));
        }
        Ok(Self {
            basis_a: basis.columns(0, a).into_owned(),
            basis_b: basis.columns(a, d - a).into_owned(),
            eigenvalues,
        })
    }

    /// Wraps a given orthonormal `d x a` basis, completing it with an
    /// orthonormal complement. Eigenvalues are set to one on the active
    /// directions and zero elsewhere.
    pub fn from_active_basis(basis_a: DMatrix<T>) -> Result<Self> {
        let (d, a) = basis_a.shape();
        if a < 1 || a > d {
            return Err(Error::OutOfRange {
                what: "truncation",
                value: a,
                lo: 1,
                hi: d.max(1),
            });
        }
        let defect = orthonormality_defect(&basis_a);
        if defect > T::lit(1e-8) {
            return Err(Error::NotOrthonormal(defect.as_f64()));
        }
        let mut complement = column_svd(&basis_a.transpose()).v.columns(a, d - a).into_owned();
        normalize_column_signs(&mut complement, T::lit(SIGN_TOL));
        let mut basis = DMatrix::zeros(d, d);
        basis.columns_mut(0, a).copy_from(&basis_a);
        basis.columns_mut(a, d - a).copy_from(&complement);
        let eigenvalues = DVector::from_fn(d, |i, _| if i < a { T::one() } else { T::zero() });
        Self::from_parts(basis, eigenvalues, a)
    }

    pub fn dim(&self) -> usize {
        self.basis_a.nrows()
    }

    /// Number of retained directions `a`.
    pub fn active_dim(&self) -> usize {
        self.basis_a.ncols()
    }

    pub fn basis_a(&self) -> &DMatrix<T> {
        &self.basis_a
    }

    pub fn basis_b(&self) -> &DMatrix<T> {
        &self.basis_b
    }

    pub fn eigenvalues(&self) -> &DVector<T> {
        &self.eigenvalues
    }

    /// `[V_a | V_b]`.
    pub fn full_basis(&self) -> DMatrix<T> {
        let d = self.dim();
        let mut v = DMatrix::zeros(d, d);
        v.columns_mut(0, self.active_dim()).copy_from(&self.basis_a);
        v.columns_mut(self.active_dim(), d - self.active_dim())
            .copy_from(&self.basis_b);
        v
    }

    /// Keeps the first `a` eigenvectors as the active basis.
    pub fn truncate(&self, a: usize) -> Result<Self> {
        Self::from_parts(self.full_basis(), self.eigenvalues.clone(), a)
    }

    /// Active coordinates `V_a^T s`.
    pub fn project(&self, s: &DVector<T>) -> DVector<T> {
        self.basis_a.tr_mul(s)
    }
}

/// Eigendecomposition of the estimate, computed from the SVD of
/// `sqrt(|Ω|/k) J`: eigenvalues are squared singular values and eigenvectors
/// the left singular vectors. Returned untruncated (`a = d`).
pub fn detect_subspace<T: Real>(
    samples: &JacobianSamples<T>,
    domain: &Hyperrectangle<T>,
) -> Result<ActiveSubspace<T>> {
    samples.check_for(domain)?;
    let scale = (domain.volume() / T::from_count(samples.len())).sqrt();
    let scaled_t = samples.jacobian().transpose() * scale;
    let svd = column_svd(&scaled_t);
    let mut v = svd.v;
    normalize_column_signs(&mut v, T::lit(SIGN_TOL));
    let eigenvalues = svd.singular_values.map(|s| clamp_eigenvalue(s * s));
    ActiveSubspace::from_parts(v, eigenvalues, samples.dim())
}

/// Left singular subspace of an arbitrary `d x k` matrix, as used for the
/// convergence studies; `a` leading vectors with sign convention applied.
pub fn leading_left_vectors<T: Real>(j: &DMatrix<T>, a: usize) -> Result<DMatrix<T>> {
    if a > j.nrows() || a == 0 {
        return Err(Error::OutOfRange {
            what: "subspace dimension",
            value: a,
            lo: 1,
            hi: j.nrows(),
        });
    }
    let svd = column_svd(&j.transpose());
    let mut v = svd.v.columns(0, a).into_owned();
    normalize_column_signs(&mut v, T::lit(SIGN_TOL));
    Ok(v)
}

fn clamp_eigenvalue<T: Real>(x: T) -> T {
    if x < T::zero() && x >= -T::lit(EIGEN_CLAMP) {
        T::zero()
    } else {
        x
    }
}

/// Outcome of [`suggest_truncation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncationSuggestion {
    pub a: usize,
    /// Set when the spectrum is identically zero and `a = 1` is a fallback.
    pub degenerate: bool,
}

/// Index of the largest log-gap in a descending spectrum. Advisory only.
pub fn suggest_truncation<T: Real>(eigenvalues: &[T]) -> TruncationSuggestion {
    let d = eigenvalues.len();
    let top = eigenvalues.first().copied().unwrap_or_else(T::zero);
    if d == 0 || !(top > T::zero()) {
        return TruncationSuggestion {
            a: 1,
            degenerate: true,
        };
    }
    if d == 1 {
        return TruncationSuggestion {
            a: 1,
            degenerate: false,
        };
    }
    let eps = top * T::lit(1e-16);
    let logs: Vec<T> = eigenvalues
        .iter()
        .map(|&l| (l.max(T::zero()) + eps).ln())
        .collect();
    let mut best = 1;
    let mut best_gap = logs[0] - logs[1];
    for a in 2..d {
        let gap = logs[a - 1] - logs[a];
        if gap > best_gap {
            best = a;
            best_gap = gap;
        }
    }
    TruncationSuggestion {
        a: best,
        degenerate: false,
    }
}

/// `‖V1 V1^T − V2 V2^T‖_2`, the sine of the largest principal angle between
/// two subspaces of equal dimension given by orthonormal bases.
pub fn subspace_distance<T: Real>(v1: &DMatrix<T>, v2: &DMatrix<T>) -> Result<T> {
    if v1.shape() != v2.shape() {
        return Err(Error::InvalidInput(format!(
            "basis shapes differ: {:?} vs {:?}",
            v1.shape(),
            v2.shape()
        )));
    }
    for v in [v1, v2] {
        let defect = orthonormality_defect(v);
        if defect > T::lit(1e-8) {
            return Err(Error::NotOrthonormal(defect.as_f64()));
        }
    }
    if v1.ncols() == 0 {
        return Ok(T::zero());
    }
    // ‖(I − P1) V2‖_2 keeps full accuracy for small angles.
    let residual = v2 - v1 * v1.tr_mul(v2);
    let s = thin_svd(&residual, None).s;
    Ok(s[0].min(T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn square() -> Hyperrectangle<f64> {
        Hyperrectangle::symmetric(2, PI).unwrap()
    }

    fn cos_samples(k: usize, seed: u64) -> JacobianSamples<f64> {
        let dom = square();
        let mut rng = seeded(seed);
        let pts: Vec<_> = (0..k).map(|_| dom.sample_uniform(&mut rng)).collect();
        let grads: Vec<_> = pts
            .iter()
            .map(|s| {
                let g = -(s[0] + s[1]).sin();
                DVector::from_vec(vec![g, g])
            })
            .collect();
        JacobianSamples::from_gradients(pts, &grads, &dom).unwrap()
    }

    #[test]
    fn c_hat_single_column() {
        let dom = square();
        let pts = vec![DVector::from_vec(vec![PI / 2.0, 0.0])];
        let j = DMatrix::from_vec(2, 1, vec![-1.0, -1.0]);
        let s = JacobianSamples::new(pts, j, &dom).unwrap();
        let c = estimate_c_hat(&s, &dom).unwrap();
        let v = 4.0 * PI * PI;
        for x in c.iter() {
            assert!((x - v).abs() < 1e-12);
        }
    }

    #[test]
    fn c_hat_zero_jacobian() {
        let dom = square();
        let pts = vec![DVector::zeros(2); 3];
        let s = JacobianSamples::new(pts, DMatrix::zeros(2, 3), &dom).unwrap();
        assert_eq!(estimate_c_hat(&s, &dom).unwrap(), DMatrix::zeros(2, 2));
        let sub = detect_subspace(&s, &dom).unwrap();
        assert!(sub.eigenvalues().iter().all(|&l| l == 0.0));
    }

    #[test]
    fn shape_and_content_errors() {
        let dom = square();
        assert!(matches!(
            JacobianSamples::new(vec![], DMatrix::<f64>::zeros(2, 0), &dom)
                .and_then(|s| estimate_c_hat(&s, &dom)),
            Err(Error::EmptySamples)
        ));
        let bad = JacobianSamples::new(
            vec![DVector::zeros(2)],
            DMatrix::from_vec(2, 1, vec![f64::NAN, 0.0]),
            &dom,
        )
        .unwrap();
        assert!(matches!(detect_subspace(&bad, &dom), Err(Error::NonFinite(_))));
        let other = Hyperrectangle::<f64>::symmetric(3, 1.0).unwrap();
        let s = cos_samples(4, 1);
        assert!(matches!(
            estimate_c_hat(&s, &other),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(JacobianSamples::new(
            vec![DVector::from_vec(vec![4.0, 0.0])],
            DMatrix::zeros(2, 1),
            &dom
        )
        .is_err());
    }

    #[test]
    fn cos_direction_is_exact() {
        let s = cos_samples(5, 7);
        let sub = detect_subspace(&s, &square()).unwrap();
        let l = sub.eigenvalues();
        assert!(l[1] / l[0] < 1e-24);
        let v = sub.basis_a().column(0);
        assert!((v[0] - FRAC_1_SQRT_2).abs() < 1e-10);
        assert!((v[1] - FRAC_1_SQRT_2).abs() < 1e-10);

        let t = sub.truncate(1).unwrap();
        assert_eq!(t.basis_a().shape(), (2, 1));
        let b = t.basis_b().column(0);
        // sign convention: first significant component positive
        assert!((b[0] - FRAC_1_SQRT_2).abs() < 1e-10);
        assert!((b[1] + FRAC_1_SQRT_2).abs() < 1e-10);
    }

    #[test]
    fn truncation_bounds() {
        let sub = detect_subspace(&cos_samples(3, 2), &square()).unwrap();
        let full = sub.truncate(2).unwrap();
        assert_eq!(full.basis_b().ncols(), 0);
        assert_eq!(full.full_basis(), sub.full_basis());
        assert!(sub.truncate(0).is_err());
        assert!(sub.truncate(3).is_err());
    }

    #[test]
    fn axis_aligned_ridge() {
        let dom = Hyperrectangle::<f64>::symmetric(4, 1.0).unwrap();
        let mut rng = seeded(4);
        let pts: Vec<_> = (0..10).map(|_| dom.sample_uniform(&mut rng)).collect();
        let grads: Vec<_> = pts
            .iter()
            .map(|s| {
                let mut g = DVector::zeros(4);
                g[0] = s[0].cos();
                g
            })
            .collect();
        let s = JacobianSamples::from_gradients(pts, &grads, &dom).unwrap();
        let sub = detect_subspace(&s, &dom).unwrap();
        let v = sub.basis_a().column(0);
        assert!((v[0] - 1.0).abs() < 1e-14);
        assert!(v.rows(1, 3).amax() < 1e-14);
    }

    #[test]
    fn svd_path_matches_explicit_eigenvalues() {
        let mut rng = seeded(17);
        for trial in 0..20 {
            let d = rng.random_range(1..=20);
            let k = rng.random_range(1..=50);
            let dom = Hyperrectangle::<f64>::symmetric(d, 1.5).unwrap();
            let pts: Vec<_> = (0..k).map(|_| dom.sample_uniform(&mut rng)).collect();
            let j = DMatrix::from_fn(d, k, |_, _| rng.random::<f64>() - 0.5);
            let s = JacobianSamples::new(pts, j, &dom).unwrap();
            let sub = detect_subspace(&s, &dom).unwrap();
            let c = estimate_c_hat(&s, &dom).unwrap();
            let mut reference: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
            reference.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let top = reference[0];
            for (x, y) in sub.eigenvalues().iter().zip(&reference) {
                assert!((x - y).abs() <= 1e-10 * top, "trial {trial}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn suggestions() {
        let four_pi2 = 4.0 * PI * PI;
        assert_eq!(suggest_truncation(&[four_pi2, 0.0]).a, 1);
        assert_eq!(suggest_truncation(&[1.0, 0.9, 1e-8, 1e-9]).a, 2);
        let z = suggest_truncation(&[0.0, 0.0, 0.0]);
        assert_eq!(z, TruncationSuggestion { a: 1, degenerate: true });
        assert_eq!(suggest_truncation(&[2.0]).a, 1);
    }

    fn explicit_projector_distance(v1: &DMatrix<f64>, v2: &DMatrix<f64>) -> f64 {
        let diff = v1 * v1.transpose() - v2 * v2.transpose();
        diff.symmetric_eigenvalues().iter().fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    #[test]
    fn distance_examples() {
        let e1 = DMatrix::from_vec(2, 1, vec![1.0f64, 0.0]);
        let e2 = DMatrix::from_vec(2, 1, vec![0.0, 1.0]);
        let diag = DMatrix::from_vec(2, 1, vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
        assert!(subspace_distance(&e1, &e1).unwrap().abs() < 1e-15);
        assert!((subspace_distance(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);
        let d = subspace_distance(&e1, &diag).unwrap();
        // oracle: eigenvalues of the explicit 2x2 projector difference
        let oracle = explicit_projector_distance(&e1, &diag);
        assert!((oracle - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((d - oracle).abs() < 1e-12);
    }

    #[test]
    fn distance_errors() {
        let e1 = DMatrix::from_vec(2, 1, vec![1.0f64, 0.0]);
        let two = DMatrix::<f64>::identity(2, 2);
        assert!(subspace_distance(&e1, &two).is_err());
        let long = DMatrix::from_vec(2, 1, vec![2.0, 0.0]);
        assert!(matches!(
            subspace_distance(&e1, &long),
            Err(Error::NotOrthonormal(_))
        ));
    }
}
