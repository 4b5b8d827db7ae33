use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Symmetric matrix stored by its lower band: entry `(i, j)` with
/// `0 <= i - j <= bandwidth`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSpd<T: Real> {
    n: usize,
    bandwidth: usize,
    // row i holds entries (i, i - bandwidth ..= i); offset bandwidth is the diagonal
    data: Vec<T>,
}

impl<T: Real> BandedSpd<T> {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self {
            n,
            bandwidth,
            data: vec![T::zero(); n * (bandwidth + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bandwidth);
        i * (self.bandwidth + 1) + self.bandwidth - (i - j)
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> T {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bandwidth {
            T::zero()
        } else {
            self.data[self.idx(r, c)]
        }
    }

    /// Adds `value` to `(i, j)` and, by symmetry, `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, value: T) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        assert!(r - c <= self.bandwidth, "entry ({i}, {j}) outside band");
        let k = self.idx(r, c);
        self.data[k] += value;
    }

    pub fn mul_vec(&self, x: &DVector<T>) -> DVector<T> {
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bandwidth);
            for j in lo..=i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                if i != j {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Band Cholesky `A = L L^T`; fails when a pivot is not positive.
    pub fn cholesky(&self) -> Result<BandedCholesky<T>> {
        let n = self.n;
        let bw = self.bandwidth;
        let mut l = self.data.clone();
        let at = |i: usize, j: usize| i * (bw + 1) + bw - (i - j);
        for j in 0..n {
            let lo = j.saturating_sub(bw);
            let mut d = l[at(j, j)];
            for k in lo..j {
                let v = l[at(j, k)];
                d -= v * v;
            }
            if !(d > T::zero()) || !d.finite() {
                return Err(Error::Factorization(format!(
                    "non-positive pivot {d} at row {j}"
                )));
            }
            let d = d.sqrt();
            l[at(j, j)] = d;
            let hi = (j + bw).min(n - 1);
            for i in j + 1..=hi {
                let lo_i = i.saturating_sub(bw).max(lo);
                let mut s = l[at(i, j)];
                for k in lo_i..j {
                    s -= l[at(i, k)] * l[at(j, k)];
                }
                l[at(i, j)] = s / d;
            }
        }
        Ok(BandedCholesky {
            n,
            bandwidth: bw,
            factor: l,
        })
    }
}

/// Lower band factor of a [`BandedSpd`] matrix.
#[derive(Debug, Clone)]
pub struct BandedCholesky<T: Real> {
    n: usize,
    bandwidth: usize,
    factor: Vec<T>,
}

impl<T: Real> BandedCholesky<T> {
    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.factor[i * (self.bandwidth + 1) + self.bandwidth - (i - j)]
    }

    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        assert_eq!(b.len(), self.n);
        let bw = self.bandwidth;
        let mut x = b.clone();
        for i in 0..self.n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.at(i, k) * x[k];
            }
            x[i] = s / self.at(i, i);
        }
        for i in (0..self.n).rev() {
            let mut s = x[i];
            let hi = (i + bw).min(self.n - 1);
            for k in i + 1..=hi {
                s -= self.at(k, i) * x[k];
            }
            x[i] = s / self.at(i, i);
        }
        x
    }
}
