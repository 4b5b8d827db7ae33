//! Low-rank matrix completion by singular value thresholding.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{normalize_column_signs, thin_svd, Svd};
use crate::scalar::Real;

/// Revealed entries `(row, col, value)` of a `d x k` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RevealedEntries<T: Real> {
    shape: (usize, usize),
    entries: Vec<(usize, usize, T)>,
}

impl<T: Real> RevealedEntries<T> {
    pub fn new(shape: (usize, usize), entries: Vec<(usize, usize, T)>) -> Result<Self> {
        let (d, k) = shape;
        let mut seen = vec![false; d * k];
        for &(i, j, v) in &entries {
            if i >= d || j >= k {
                return Err(Error::InvalidInput(format!("entry ({i}, {j}) outside a {d}x{k} matrix")));
            }
            if !v.finite() {
                return Err(Error::NonFinite("revealed entry"));
            }
            if std::mem::replace(&mut seen[i + j * d], true) {
                return Err(Error::InvalidInput(format!("duplicate entry ({i}, {j})")));
            }
        }
        let revealed = Self { shape, entries };
        let (rows, cols) = revealed.uncovered();
        if rows + cols > 0 {
            log::warn!("{rows} rows and {cols} columns have no revealed entry");
        }
        Ok(revealed)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn entries(&self) -> &[(usize, usize, T)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Revealed fraction of the matrix.
    pub fn fraction(&self) -> f64 {
        self.entries.len() as f64 / (self.shape.0 * self.shape.1) as f64
    }

    /// Rows and columns without any revealed entry.
    pub fn uncovered(&self) -> (usize, usize) {
        let mut rows = vec![false; self.shape.0];
        let mut cols = vec![false; self.shape.1];
        for &(i, j, _) in &self.entries {
            rows[i] = true;
            cols[j] = true;
        }
        (
            rows.iter().filter(|&&r| !r).count(),
            cols.iter().filter(|&&c| !c).count(),
        )
    }

    /// `P_D(M)` as a dense matrix.
    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.shape.0, self.shape.1);
        for &(i, j, v) in &self.entries {
            m[(i, j)] = v;
        }
        m
    }

    /// `‖P_D(M)‖_F`.
    pub fn norm(&self) -> T {
        self.entries.iter().fold(T::zero(), |acc, &(_, _, v)| acc + v * v).sqrt()
    }
}

/// Reveals each entry independently with probability `gamma`, visiting the
/// matrix in column-major order.
pub fn reveal_uniform<T: Real, R: Rng + ?Sized>(j: &DMatrix<T>, gamma: f64, rng: &mut R) -> Result<RevealedEntries<T>> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidInput(format!("reveal fraction {gamma} not in (0, 1]")));
    }
    let mut entries = Vec::new();
    for col in 0..j.ncols() {
        for row in 0..j.nrows() {
            if rng.random::<f64>() < gamma {
                entries.push((row, col, j[(row, col)]));
            }
        }
    }
    RevealedEntries::new(j.shape(), entries)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvtParams<T> {
    /// Shrinkage threshold on the singular values.
    pub tau: T,
    /// Step size of the dual update.
    pub delta: T,
    /// Stop when the relative residual on the revealed set is at most `tol`.
    pub tol: T,
    /// Stop when the absolute residual on the revealed set is at most `eps`.
    pub eps: T,
    pub max_iter: usize,
}

impl<T: Real> Default for SvtParams<T> {
    fn default() -> Self {
        Self {
            tau: T::lit(100.0),
            delta: T::one(),
            tol: T::lit(1e-4),
            eps: T::lit(1e-6),
            max_iter: 1000,
        }
    }
}

impl<T: Real> SvtParams<T> {
    fn validate(&self) -> Result<()> {
        let positive = [self.tau, self.delta, self.tol].iter().all(|v| *v > T::zero() && v.finite());
        if !positive || !(self.eps >= T::zero()) || self.max_iter == 0 {
            return Err(Error::InvalidInput(format!("invalid SVT parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SvtResult<T: Real> {
    /// `d x r`.
    pub left_vectors: DMatrix<T>,
    /// Length `r`, positive and descending.
    pub singular_values: DVector<T>,
    /// `k x r`.
    pub right_vectors: DMatrix<T>,
    pub iterations: usize,
    /// `‖P_D(X − M)‖_F / ‖P_D(M)‖_F` of the returned iterate.
    pub residual: T,
    pub converged: bool,
}

impl<T: Real> SvtResult<T> {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        let mut us = self.left_vectors.clone();
        for (j, &s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(s);
        }
        us * self.right_vectors.transpose()
    }

    fn empty(d: usize, k: usize) -> Self {
        Self {
            left_vectors: DMatrix::zeros(d, 0),
            singular_values: DVector::zeros(0),
            right_vectors: DMatrix::zeros(k, 0),
            iterations: 0,
            residual: T::zero(),
            converged: true,
        }
    }
}

/// Relative residual of the factors `U diag(s) Vᵀ` on the revealed entries.
pub fn revealed_residual<T: Real>(observed: &RevealedEntries<T>, u: &DMatrix<T>, s: &DVector<T>, v: &DMatrix<T>) -> T {
    let norm = observed.norm();
    let mut sum = T::zero();
    for &(i, j, m) in observed.entries() {
        let r = m - entry(u, s, v, i, j);
        sum += r * r;
    }
    if norm == T::zero() {
        sum.sqrt()
    } else {
        sum.sqrt() / norm
    }
}

fn entry<T: Real>(u: &DMatrix<T>, s: &DVector<T>, v: &DMatrix<T>, i: usize, j: usize) -> T {
    let mut x = T::zero();
    for r in 0..s.len() {
        x += u[(i, r)] * s[r] * v[(j, r)];
    }
    x
}

/// Runs the SVT iteration `X = shrink_τ(Y)`, `Y += δ P_D(M − X)` from the
/// kick-started `Y = ⌈τ / (δ ‖P_D M‖₂)⌉ δ P_D(M)`. Stops on the relative
/// tolerance or the absolute `eps`; otherwise returns the best iterate seen
/// with `converged = false`.
pub fn svt_complete<T: Real>(observed: &RevealedEntries<T>, params: &SvtParams<T>) -> Result<SvtResult<T>> {
    params.validate()?;
    if observed.is_empty() {
        return Err(Error::EmptySamples);
    }
    let (d, k) = observed.shape();
    let norm = observed.norm();
    if norm == T::zero() {
        return Ok(SvtResult::empty(d, k));
    }
    let pd = observed.to_dense();
    let spectral = thin_svd(&pd, None).s[0];
    let kick = (params.tau / (params.delta * spectral)).ceil().max(T::one());
    let mut y = pd * (kick * params.delta);

    let mut previous: Option<Svd<T>> = None;
    let mut best: Option<(T, SvtResult<T>)> = None;
    for iteration in 1..=params.max_iter {
        let svd = thin_svd(&y, previous.as_ref());
        let r = svd.rank(params.tau);
        let u = svd.u.columns(0, r).into_owned();
        let v = svd.v.columns(0, r).into_owned();
        let s = svd.s.rows(0, r).map(|x| x - params.tau);

        let mut abs_sq = T::zero();
        let mut step = Vec::with_capacity(observed.len());
        for &(i, j, m) in observed.entries() {
            let res = m - entry(&u, &s, &v, i, j);
            abs_sq += res * res;
            step.push(res);
        }
        let absolute = abs_sq.sqrt();
        let relative = absolute / norm;
        let done = relative <= params.tol || absolute <= params.eps;
        if done || best.as_ref().is_none_or(|(b, _)| relative < *b) {
            let result = SvtResult {
                left_vectors: u,
                singular_values: s,
                right_vectors: v,
                iterations: iteration,
                residual: relative,
                converged: done,
            };
            if done {
                return Ok(finish(result));
            }
            best = Some((relative, result));
        }
        for (&(i, j, _), res) in observed.entries().iter().zip(step) {
            y[(i, j)] += params.delta * res;
        }
        previous = Some(svd);
    }
    let (_, mut result) = best.expect("at least one iteration");
    result.iterations = params.max_iter;
    log::warn!(
        "SVT stopped after {} iterations with relative residual {}",
        params.max_iter,
        result.residual
    );
    Ok(finish(result))
}

/// Runs [`svt_complete`] on the revealed entries rescaled to unit RMS value,
/// then maps the singular values back. This makes `tau` (and `eps`) relative
/// to the typical entry size instead of absolute.
pub fn svt_complete_normalized<T: Real>(observed: &RevealedEntries<T>, params: &SvtParams<T>) -> Result<SvtResult<T>> {
    if observed.is_empty() {
        return Err(Error::EmptySamples);
    }
    let rms = observed.norm() / T::from_count(observed.len()).sqrt();
    if rms == T::zero() {
        return svt_complete(observed, params);
    }
    let scaled = RevealedEntries {
        shape: observed.shape,
        entries: observed.entries.iter().map(|&(i, j, v)| (i, j, v / rms)).collect(),
    };
    let mut result = svt_complete(&scaled, params)?;
    result.singular_values *= rms;
    Ok(result)
}

fn finish<T: Real>(mut result: SvtResult<T>) -> SvtResult<T> {
    // orient the factor pairs consistently for reproducible output
    let before = result.left_vectors.clone();
    normalize_column_signs(&mut result.left_vectors, T::lit(1e-12));
    for c in 0..result.left_vectors.ncols() {
        if before.column(c) != result.left_vectors.column(c) {
            result.right_vectors.column_mut(c).neg_mut();
        }
    }
    result
}
