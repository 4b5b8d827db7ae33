//! Gaussian radial basis interpolation with a linear polynomial tail.
//!
//! The augmented system `[G + λI, P; Pᵀ, 0] [w; c] = [f; 0]` is solved on the
//! null space of `Pᵀ`: with `P = Q R`, the weights are `w = Q₂ η` where
//! `(Q₂ᵀ (G + λI) Q₂) η = Q₂ᵀ f` is symmetric positive definite. A few steps
//! of iterative refinement against the unshifted system follow, so the shift
//! only limits the ill-conditioned components.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

const MAGIC: &str = "INSUB-RBF 1";
const MEDIAN_PAIR_LIMIT: usize = 3000;
const REFINEMENT_STEPS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RbfConfig<T> {
    /// Kernel width; `None` uses the median pairwise distance of the centres.
    pub shape: Option<T>,
    /// Diagonal regularization; `None` uses `1e-10 · trace(G) / n`.
    pub regularization: Option<T>,
    /// Recorded in the saved model only.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbfSurrogate<T: Real> {
    centers: Vec<DVector<T>>,
    weights: DVector<T>,
    poly_coeffs: DVector<T>,
    shape: T,
    regularization: T,
    training_residual: T,
    lower: DVector<T>,
    upper: DVector<T>,
    seed: Option<u64>,
}

impl<T: Real> RbfSurrogate<T> {
    pub fn fit(points: &[DVector<T>], values: &[T], config: &RbfConfig<T>) -> Result<Self> {
        let n = points.len();
        if values.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: values.len(),
            });
        }
        let a = points.first().map_or(0, |p| p.len());
        if a == 0 {
            return Err(Error::EmptySamples);
        }
        if n < a + 2 {
            return Err(Error::InvalidInput(format!("{n} points are too few for dimension {a}")));
        }
        if points.iter().any(|p| p.len() != a) {
            return Err(Error::InvalidInput("points of different dimensions".into()));
        }
        if points.iter().flat_map(|p| p.iter()).chain(values).any(|v| !v.finite()) {
            return Err(Error::NonFinite("surrogate training data"));
        }

        let min_distance = min_pairwise_distance(points);
        if min_distance <= T::lit(1e-12) {
            return Err(Error::Singular(format!("coincident centres (distance {min_distance})")));
        }
        let shape = match config.shape {
            Some(s) if s > T::zero() && s.finite() => s,
            Some(_) => return Err(Error::InvalidInput("kernel width must be positive".into())),
            None => median_pairwise_distance(points),
        };

        let mut gram = DMatrix::from_fn(n, n, |i, j| kernel(&points[i], &points[j], shape));
        let regularization = match config.regularization {
            Some(r) if r >= T::zero() && r.finite() => r,
            Some(_) => return Err(Error::InvalidInput("regularization must be nonnegative".into())),
            None => T::lit(1e-10) * gram.trace() / T::from_count(n),
        };
        for i in 0..n {
            gram[(i, i)] += regularization;
        }
        let f = DVector::from_column_slice(values);

        let m = a + 1;
        let tail = DMatrix::from_fn(n, m, |i, j| if j == 0 { T::one() } else { points[i][j - 1] });
        let householder = Householder::new(tail)?;

        // B = Qᵀ (G + λI) Q, then solve on the trailing block
        let mut b = gram.clone();
        householder.conjugate(&mut b);
        let b22 = b.view((m, m), (n - m, n - m)).clone_owned();
        let chol = b22
            .cholesky()
            .ok_or_else(|| Error::Singular("kernel block not positive definite".into()))?;
        let solve = |rhs: &DVector<T>| -> Result<(DVector<T>, DVector<T>)> {
            let mut qf = rhs.clone();
            householder.apply_qt(&mut qf);
            let eta = chol.solve(&qf.rows(m, n - m).into_owned());
            let mut weights = DVector::zeros(n);
            weights.rows_mut(m, n - m).copy_from(&eta);
            householder.apply_q(&mut weights);
            let top = qf.rows(0, m) - b.view((0, m), (m, n - m)) * &eta;
            Ok((weights, householder.solve_r(&top)?))
        };
        // residual of the interpolant itself, i.e. without the diagonal shift
        let residual = |w: &DVector<T>, c: &DVector<T>| -> DVector<T> {
            &f - (&gram * w - w * regularization + householder.tail() * c)
        };

        let (mut weights, mut poly_coeffs) = solve(&f)?;
        let mut r = residual(&weights, &poly_coeffs);
        for _ in 0..REFINEMENT_STEPS {
            let (dw, dc) = solve(&r)?;
            let (w2, c2) = (&weights + dw, &poly_coeffs + dc);
            let r2 = residual(&w2, &c2);
            if r2.amax() > r.amax() * T::lit(0.5) {
                break;
            }
            weights = w2;
            poly_coeffs = c2;
            r = r2;
        }
        let training_residual = r.amax();

        let lower = DVector::from_fn(a, |j, _| points.iter().map(|p| p[j]).fold(points[0][j], |x, y| x.min(y)));
        let upper = DVector::from_fn(a, |j, _| points.iter().map(|p| p[j]).fold(points[0][j], |x, y| x.max(y)));

        let surrogate = Self {
            centers: points.to_vec(),
            weights,
            poly_coeffs,
            shape,
            regularization,
            training_residual,
            lower,
            upper,
            seed: config.seed,
        };
        let allowed = T::lit(1e-8).max(T::lit(10.0) * regularization * f.norm());
        if training_residual > allowed {
            log::warn!("surrogate training residual {training_residual} exceeds {allowed}");
        }
        log::debug!(
            "fitted {n} centres in dimension {a}: width {shape}, regularization {regularization}, residual {training_residual}"
        );
        Ok(surrogate)
    }

    pub fn evaluate(&self, y: &DVector<T>) -> Result<T> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: y.len(),
            });
        }
        if y.iter().any(|v| !v.finite()) {
            return Err(Error::NonFinite("surrogate input"));
        }
        Ok(self.evaluate_unchecked(y))
    }

    fn evaluate_unchecked(&self, y: &DVector<T>) -> T {
        let radial = self
            .centers
            .iter()
            .zip(self.weights.iter())
            .fold(T::zero(), |acc, (c, &w)| acc + w * kernel(y, c, self.shape));
        radial + self.tail_value(y)
    }

    /// Value of the linear tail `c₀ + Σ c_i y_i`.
    pub fn tail_value(&self, y: &DVector<T>) -> T {
        self.poly_coeffs[0] + self.poly_coeffs.rows(1, self.dim()).dot(y)
    }

    /// True when `y` lies outside the bounding box of the centres.
    pub fn is_extrapolation(&self, y: &DVector<T>) -> bool {
        y.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .any(|(&v, (&l, &u))| v < l || v > u)
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[DVector<T>] {
        &self.centers
    }

    pub fn weights(&self) -> &DVector<T> {
        &self.weights
    }

    pub fn poly_coeffs(&self) -> &DVector<T> {
        &self.poly_coeffs
    }

    pub fn shape(&self) -> T {
        self.shape
    }

    pub fn regularization(&self) -> T {
        self.regularization
    }

    /// Largest `|s(y_j) − f_j|` over the training set.
    pub fn training_residual(&self) -> T {
        self.training_residual
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Text container: a magic line, `key value` metadata lines, then one
    /// line per centre holding its coordinates followed by its weight.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "kernel gaussian");
        let _ = writeln!(out, "dim {}", self.dim());
        let _ = writeln!(out, "count {}", self.len());
        let _ = writeln!(out, "shape {:e}", self.shape.as_f64());
        let _ = writeln!(out, "regularization {:e}", self.regularization.as_f64());
        let _ = writeln!(out, "training_residual {:e}", self.training_residual.as_f64());
        match self.seed {
            Some(s) => {
                let _ = writeln!(out, "seed {s}");
            }
            None => {
                let _ = writeln!(out, "seed none");
            }
        }
        let _ = writeln!(out, "tail {}", join(self.poly_coeffs.iter()));
        let _ = writeln!(out, "centers");
        for (c, w) in self.centers.iter().zip(self.weights.iter()) {
            let _ = writeln!(out, "{}", join(c.iter().chain(std::iter::once(w))));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |what: &str| Error::Format(format!("surrogate model: {what}"));
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("missing header"));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .map(str::to_owned)
                .ok_or_else(|| bad(key))
        };
        if field("kernel")? != "gaussian" {
            return Err(bad("unknown kernel"));
        }
        let dim: usize = field("dim")?.parse().map_err(|_| bad("dim"))?;
        let count: usize = field("count")?.parse().map_err(|_| bad("count"))?;
        let shape = parse_scalar::<T>(&field("shape")?).ok_or_else(|| bad("shape"))?;
        let regularization = parse_scalar::<T>(&field("regularization")?).ok_or_else(|| bad("regularization"))?;
        let training_residual =
            parse_scalar::<T>(&field("training_residual")?).ok_or_else(|| bad("training_residual"))?;
        let seed = match field("seed")?.as_str() {
            "none" => None,
            s => Some(s.parse().map_err(|_| bad("seed"))?),
        };
        let tail = parse_row::<T>(&field("tail")?).ok_or_else(|| bad("tail"))?;
        let header = lines.next().ok_or_else(|| bad("truncated"))?;
        if header != "centers" || tail.len() != dim + 1 || dim == 0 {
            return Err(bad("layout"));
        }
        let mut centers = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        for line in lines.by_ref().take(count) {
            let row = parse_row::<T>(line).ok_or_else(|| bad("centre row"))?;
            if row.len() != dim + 1 {
                return Err(bad("centre width"));
            }
            centers.push(DVector::from_column_slice(&row[..dim]));
            weights.push(row[dim]);
        }
        if centers.len() != count || lines.next().is_some() || count == 0 {
            return Err(bad("centre count"));
        }
        let lower = DVector::from_fn(dim, |j, _| centers.iter().map(|p| p[j]).fold(centers[0][j], |x, y| x.min(y)));
        let upper = DVector::from_fn(dim, |j, _| centers.iter().map(|p| p[j]).fold(centers[0][j], |x, y| x.max(y)));
        Ok(Self {
            centers,
            weights: DVector::from_vec(weights),
            poly_coeffs: DVector::from_vec(tail),
            shape,
            regularization,
            training_residual,
            lower,
            upper,
            seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn join<'a, T: Real>(values: impl Iterator<Item = &'a T>) -> String {
    values.map(|v| format!("{:e}", v.as_f64())).collect::<Vec<_>>().join(" ")
}

fn parse_scalar<T: Real>(s: &str) -> Option<T> {
    s.trim().parse::<f64>().ok().and_then(T::from_f64)
}

fn parse_row<T: Real>(s: &str) -> Option<Vec<T>> {
    s.split_whitespace().map(parse_scalar).collect()
}

fn kernel<T: Real>(x: &DVector<T>, y: &DVector<T>, shape: T) -> T {
    let r2 = x.iter().zip(y.iter()).fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
    (-r2 / (shape * shape)).exp()
}

fn min_pairwise_distance<T: Real>(points: &[DVector<T>]) -> T {
    let mut best = T::lit(f64::INFINITY);
    for i in 0..points.len() {
        for j in 0..i {
            best = best.min((&points[i] - &points[j]).norm());
        }
    }
    best
}

/// Median over all pairs, or over the pairs of an evenly strided subset of
/// `MEDIAN_PAIR_LIMIT` points for large sets.
fn median_pairwise_distance<T: Real>(points: &[DVector<T>]) -> T {
    let stride = points.len().div_ceil(MEDIAN_PAIR_LIMIT).max(1);
    let subset: Vec<&DVector<T>> = points.iter().step_by(stride).collect();
    let mut distances: Vec<f64> = Vec::with_capacity(subset.len() * subset.len() / 2);
    for i in 0..subset.len() {
        for j in 0..i {
            distances.push((subset[i] - subset[j]).norm().as_f64());
        }
    }
    let mid = distances.len() / 2;
    let (_, median, _) = distances.select_nth_unstable_by(mid, f64::total_cmp);
    T::lit(*median)
}

/// Householder QR of the `n x m` tail matrix, kept in factored form.
struct Householder<T: Real> {
    tail: DMatrix<T>,
    vectors: Vec<DVector<T>>,
    betas: Vec<T>,
    r: DMatrix<T>,
}

impl<T: Real> Householder<T> {
    fn new(tail: DMatrix<T>) -> Result<Self> {
        let (n, m) = tail.shape();
        let mut work = tail.clone();
        let mut vectors = Vec::with_capacity(m);
        let mut betas = Vec::with_capacity(m);
        let scale = tail.amax().max(T::one());
        for k in 0..m {
            let x = work.view((k, k), (n - k, 1)).clone_owned();
            let alpha = x.norm();
            if alpha <= T::lit(1e-12) * scale * T::from_count(n).sqrt() {
                return Err(Error::Singular("centres are not poised for a linear tail".into()));
            }
            let sign = if x[0] >= T::zero() { T::one() } else { -T::one() };
            let mut v = DVector::zeros(n);
            v.rows_mut(k, n - k).copy_from(&x.column(0));
            v[k] += sign * alpha;
            let beta = T::lit(2.0) / v.norm_squared();
            let w = work.tr_mul(&v);
            work.ger(-beta, &v, &w, T::one());
            vectors.push(v);
            betas.push(beta);
        }
        let r = work.view((0, 0), (m, m)).upper_triangle();
        Ok(Self { tail, vectors, betas, r })
    }

    fn tail(&self) -> &DMatrix<T> {
        &self.tail
    }

    fn apply_qt(&self, x: &mut DVector<T>) {
        for (v, &beta) in self.vectors.iter().zip(&self.betas) {
            let c = v.dot(x) * beta;
            x.axpy(-c, v, T::one());
        }
    }

    fn apply_q(&self, x: &mut DVector<T>) {
        for (v, &beta) in self.vectors.iter().zip(&self.betas).rev() {
            let c = v.dot(x) * beta;
            x.axpy(-c, v, T::one());
        }
    }

    /// `B ← Qᵀ B Q` for symmetric `B`.
    fn conjugate(&self, b: &mut DMatrix<T>) {
        for (v, &beta) in self.vectors.iter().zip(&self.betas) {
            let w = b.tr_mul(v);
            b.ger(-beta, v, &w, T::one());
            let w = &*b * v;
            b.ger(-beta, &w, v, T::one());
        }
    }

    fn solve_r(&self, rhs: &DVector<T>) -> Result<DVector<T>> {
        self.r
            .solve_upper_triangular(rhs)
            .ok_or_else(|| Error::Singular("triangular tail factor".into()))
    }
}
