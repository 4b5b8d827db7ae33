//! One-sided (Hestenes) Jacobi singular value decomposition.
//!
//! Plane rotations are applied to pairs of columns of a working copy `B`
//! until all columns are mutually orthogonal to working precision; the same
//! rotations accumulate into `V`. Then `A V = B`, the singular values are the
//! column norms of `B` and the left vectors are its normalized columns. The
//! method computes small singular values to high relative accuracy, which
//! matters for the rank tests on ridge functions.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

const MAX_SWEEPS: usize = 80;

/// Raw result of [`one_sided_jacobi`], sorted by decreasing singular value.
#[derive(Debug, Clone)]
pub struct JacobiOutput<T: Real> {
    pub singular_values: DVector<T>,
    /// `m x n`; column `j` is `B_j / sigma_j`, or zero when `sigma_j = 0`.
    pub u: DMatrix<T>,
    /// `n x n` orthogonal.
    pub v: DMatrix<T>,
    pub sweeps: usize,
}

/// Orthogonalizes the columns of `a`. When `start` is given the iteration
/// begins from `a * start` with `V = start`, which converges in very few
/// sweeps when `start` is close to the right singular vectors.
pub fn one_sided_jacobi<T: Real>(a: DMatrix<T>, start: Option<&DMatrix<T>>) -> JacobiOutput<T> {
    let (m, n) = a.shape();
    let (mut b, mut v) = match start {
        Some(v0) => (&a * v0, v0.clone()),
        None => (a, DMatrix::identity(n, n)),
    };
    let tol = T::default_epsilon() * T::from_count(m.max(1)).sqrt();
    let mut sweeps = 0;

    if m > 0 && n > 1 {
        let bs = b.as_mut_slice();
        let vs = v.as_mut_slice();
        for sweep in 0..MAX_SWEEPS {
            sweeps = sweep + 1;
            let mut rotated = false;
            for p in 0..n - 1 {
                for q in p + 1..n {
                    let (alpha, beta, gamma) = {
                        let cp = &bs[p * m..(p + 1) * m];
                        let cq = &bs[q * m..(q + 1) * m];
                        let mut alpha = T::zero();
                        let mut beta = T::zero();
                        let mut gamma = T::zero();
                        for (&x, &y) in cp.iter().zip(cq) {
                            alpha += x * x;
                            beta += y * y;
                            gamma += x * y;
                        }
                        (alpha, beta, gamma)
                    };
                    if gamma == T::zero() || alpha == T::zero() || beta == T::zero() {
                        continue;
                    }
                    if gamma.abs() <= tol * alpha.sqrt() * beta.sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (gamma + gamma);
                    let sign = if zeta >= T::zero() { T::one() } else { -T::one() };
                    let t = sign / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = c * t;
                    rotate(bs, m, p, q, c, s);
                    rotate(vs, n, p, q, c, s);
                }
            }
            if !rotated {
                break;
            }
        }
    }

    let norms: Vec<T> = b.column_iter().map(|c| c.norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        norms[j]
            .partial_cmp(&norms[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });

    let singular_values = DVector::from_iterator(n, order.iter().map(|&j| norms[j]));
    let mut u = DMatrix::zeros(m, n);
    let mut v_sorted = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        v_sorted.set_column(dst, &v.column(src));
        if norms[src] > T::zero() {
            u.set_column(dst, &(b.column(src) / norms[src]));
        }
    }
    JacobiOutput {
        singular_values,
        u,
        v: v_sorted,
        sweeps,
    }
}

#[inline]
fn rotate<T: Real>(data: &mut [T], stride: usize, p: usize, q: usize, c: T, s: T) {
    let (head, tail) = data.split_at_mut(q * stride);
    let cp = &mut head[p * stride..(p + 1) * stride];
    let cq = &mut tail[..stride];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Singular values and the complete right singular basis of an `m x n`
/// matrix (`n` columns), for any `m`.
#[derive(Debug, Clone)]
pub struct ColumnSvd<T: Real> {
    /// Length `n`, descending; zero-padded when `m < n`.
    pub singular_values: DVector<T>,
    /// `n x n` orthogonal.
    pub v: DMatrix<T>,
}

/// Computes [`ColumnSvd`]. Tall inputs are first reduced to their triangular
/// QR factor, which has the same singular values and right vectors.
pub fn column_svd<T: Real>(a: &DMatrix<T>) -> ColumnSvd<T> {
    let (m, n) = a.shape();
    let out = if m > n {
        let r = a.clone().qr().r();
        one_sided_jacobi(r, None)
    } else {
        one_sided_jacobi(a.clone(), None)
    };
    ColumnSvd {
        singular_values: out.singular_values,
        v: out.v,
    }
}

/// Thin SVD `A = U diag(s) V^T` with `r = min(m, n)` triplets, descending.
/// Columns of `u` and `v` belonging to zero singular values are unspecified.
#[derive(Debug, Clone)]
pub struct Svd<T: Real> {
    pub u: DMatrix<T>,
    pub s: DVector<T>,
    pub v: DMatrix<T>,
}

impl<T: Real> Svd<T> {
    pub fn rank(&self, threshold: T) -> usize {
        self.s.iter().take_while(|&&x| x > threshold).count()
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        let mut us = self.u.clone();
        for (j, &sj) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(sj);
        }
        us * self.v.transpose()
    }
}

/// Thin SVD. `previous` warm-starts the Jacobi sweeps from the factorization
/// of a nearby matrix with the same shape; the result does not depend on it
/// beyond rounding.
pub fn thin_svd<T: Real>(a: &DMatrix<T>, previous: Option<&Svd<T>>) -> Svd<T> {
    let (m, n) = a.shape();
    if m < n {
        // Work on the transpose; its right basis is our left basis.
        let swapped = previous.map(|p| Svd {
            u: p.v.clone(),
            s: p.s.clone(),
            v: p.u.clone(),
        });
        let t = thin_svd(&a.transpose(), swapped.as_ref());
        return Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        };
    }
    let qr = a.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let start = previous.map(|p| &p.v).filter(|v0| v0.shape() == (n, n));
    let out = one_sided_jacobi(r, start);
    Svd {
        u: q * out.u,
        s: out.singular_values,
        v: out.v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormality_defect;
    use crate::rng::seeded;
    use rand::Rng;

    fn random_matrix(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = seeded(seed);
        DMatrix::from_fn(m, n, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn reconstructs_tall_and_wide() {
        for &(m, n) in &[(7, 3), (3, 7), (5, 5), (40, 12)] {
            let a = random_matrix(m, n, (m * 100 + n) as u64);
            let svd = thin_svd(&a, None);
            let err = (svd.reconstruct() - &a).amax();
            assert!(err < 1e-12, "{m}x{n}: {err}");
            assert!(orthonormality_defect(&svd.u) < 1e-12);
            assert!(orthonormality_defect(&svd.v) < 1e-12);
            for w in svd.s.as_slice().windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn matches_reference_singular_values() {
        let a = random_matrix(30, 9, 11);
        let ours = thin_svd(&a, None).s;
        let mut reference: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
        reference.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for (x, y) in ours.iter().zip(&reference) {
            assert!((x - y).abs() < 1e-12 * reference[0]);
        }
    }

    #[test]
    fn column_svd_gives_complete_basis_for_wide_input() {
        let a = random_matrix(2, 6, 5);
        let c = column_svd(&a);
        assert_eq!(c.v.shape(), (6, 6));
        assert!(orthonormality_defect(&c.v) < 1e-12);
        assert!(c.singular_values[2].abs() < 1e-14);
        let av = &a * &c.v;
        for j in 2..6 {
            assert!(av.column(j).norm() < 1e-13);
        }
    }

    #[test]
    fn tiny_singular_values_keep_relative_accuracy() {
        // Exactly rank one up to the rounding of each entry.
        let u = DVector::from_vec(vec![0.3, -1.2, 0.7, 2.0]);
        let w: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = DMatrix::from_fn(4, 50, |i, j| u[i] * w[j]);
        let c = column_svd(&a.transpose());
        let ratio = c.singular_values[1] / c.singular_values[0];
        assert!(ratio < 1e-15, "{ratio}");
    }

    #[test]
    fn warm_start_converges_to_same_factorization() {
        let a = random_matrix(60, 20, 2);
        let cold = thin_svd(&a, None);
        let perturbed = &a + random_matrix(60, 20, 3) * 1e-6;
        let warm = thin_svd(&perturbed, Some(&cold));
        let reference = thin_svd(&perturbed, None);
        assert!((warm.reconstruct() - &perturbed).amax() < 1e-12);
        for (x, y) in warm.s.iter().zip(reference.s.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let a = DMatrix::<f32>::from_fn(6, 3, |i, j| ((i * 3 + j) as f32).cos());
        let svd = thin_svd(&a, None);
        assert!((svd.reconstruct() - &a).amax() < 1e-5);
    }
}
