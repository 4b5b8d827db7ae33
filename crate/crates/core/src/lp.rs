//! Dense linear programs over a box with optional equality constraints,
//! solved by a bounded-variable primal simplex (two phases, Bland's rule).

use nalgebra::{DMatrix, DVector};

use crate::domain::Hyperrectangle;
use crate::error::{Error, Result};
use crate::scalar::Real;

const PIVOT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;

/// `min cᵀs  s.t.  A s = r,  lower <= s <= upper`.
#[derive(Debug, Clone)]
pub struct LinearProgram<T: Real> {
    objective: DVector<T>,
    equalities: Option<(DMatrix<T>, DVector<T>)>,
    bounds: Hyperrectangle<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T: Real> {
    pub status: LpStatus,
    pub point: Option<DVector<T>>,
    pub objective_value: Option<T>,
    /// Simplex pivots and bound flips over both phases.
    pub iterations: usize,
}

impl<T: Real> LpSolution<T> {
    fn without_point(status: LpStatus, iterations: usize) -> Self {
        Self {
            status,
            point: None,
            objective_value: None,
            iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

impl<T: Real> LinearProgram<T> {
    /// Box-only program. A zero objective makes it a pure feasibility problem.
    pub fn new(objective: DVector<T>, bounds: Hyperrectangle<T>) -> Result<Self> {
        if objective.len() != bounds.dim() {
            return Err(Error::DimensionMismatch {
                expected: bounds.dim(),
                found: objective.len(),
            });
        }
        if objective.iter().any(|v| !v.finite()) {
            return Err(Error::NonFinite("LP objective"));
        }
        Ok(Self {
            objective,
            equalities: None,
            bounds,
        })
    }

    /// Zero objective with `A s = r`.
    pub fn feasibility(matrix: DMatrix<T>, rhs: DVector<T>, bounds: Hyperrectangle<T>) -> Result<Self> {
        let d = bounds.dim();
        Self::new(DVector::zeros(d), bounds)?.with_equalities(matrix, rhs)
    }

    pub fn with_equalities(mut self, matrix: DMatrix<T>, rhs: DVector<T>) -> Result<Self> {
        let d = self.bounds.dim();
        if matrix.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: matrix.ncols(),
            });
        }
        if matrix.nrows() != rhs.len() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: rhs.len(),
            });
        }
        if matrix.nrows() > d {
            return Err(Error::InvalidInput(format!(
                "{} equality rows exceed the dimension {d}",
                matrix.nrows()
            )));
        }
        if matrix.iter().chain(rhs.iter()).any(|v| !v.finite()) {
            return Err(Error::NonFinite("LP equality data"));
        }
        self.equalities = Some((matrix, rhs));
        Ok(self)
    }

    pub fn objective(&self) -> &DVector<T> {
        &self.objective
    }

    pub fn equalities(&self) -> Option<(&DMatrix<T>, &DVector<T>)> {
        self.equalities.as_ref().map(|(a, r)| (a, r))
    }

    pub fn bounds(&self) -> &Hyperrectangle<T> {
        &self.bounds
    }

    pub fn solve(&self) -> Result<LpSolution<T>> {
        solve(self)
    }
}

/// Closed-form minimum of `cᵀs` over a box: `s_i = lower_i` when `c_i >= 0`,
/// otherwise `upper_i`.
pub fn minimize_linear_over_box<T: Real>(c: &DVector<T>, bounds: &Hyperrectangle<T>) -> Result<(T, DVector<T>)> {
    if c.len() != bounds.dim() {
        return Err(Error::DimensionMismatch {
            expected: bounds.dim(),
            found: c.len(),
        });
    }
    if c.iter().any(|v| !v.finite()) {
        return Err(Error::NonFinite("LP objective"));
    }
    let point = DVector::from_iterator(
        c.len(),
        c.iter()
            .zip(bounds.lower().iter().zip(bounds.upper().iter()))
            .map(|(&ci, (&l, &u))| if ci >= T::zero() { l } else { u }),
    );
    Ok((c.dot(&point), point))
}

pub fn solve<T: Real>(lp: &LinearProgram<T>) -> Result<LpSolution<T>> {
    let Some((a, r)) = &lp.equalities else {
        let (value, point) = minimize_linear_over_box(&lp.objective, &lp.bounds)?;
        return Ok(LpSolution {
            status: LpStatus::Optimal,
            point: Some(point),
            objective_value: Some(value),
            iterations: 0,
        });
    };

    let lower = lp.bounds.lower();
    let width = lp.bounds.upper() - lower;
    let d = lower.len();

    // shift to x = s - lower, keep nonzero rows, make the rhs nonnegative
    let scale = a.amax().max(T::one());
    let shifted = r - a * lower;
    let mut rows = Vec::new();
    for i in 0..a.nrows() {
        let row_max = a.row(i).amax();
        if row_max <= T::default_epsilon() * scale {
            if shifted[i].abs() > T::lit(FEAS_TOL) * (T::one() + r[i].abs()) {
                return Ok(LpSolution::without_point(LpStatus::Infeasible, 0));
            }
        } else {
            rows.push(i);
        }
    }
    if rows.is_empty() {
        return solve(&LinearProgram::new(lp.objective.clone(), lp.bounds.clone())?);
    }
    let m = rows.len();
    let mut tableau = DMatrix::zeros(m, d + m);
    let mut b = DVector::zeros(m);
    for (k, &i) in rows.iter().enumerate() {
        let sign = if shifted[i] < T::zero() { -T::one() } else { T::one() };
        for j in 0..d {
            tableau[(k, j)] = a[(i, j)] * sign;
        }
        tableau[(k, d + k)] = T::one();
        b[k] = shifted[i] * sign;
    }
    let structural = tableau.columns(0, d).into_owned();

    let inf = T::lit(f64::INFINITY);
    let mut upper: Vec<T> = width.iter().copied().chain(std::iter::repeat_n(inf, m)).collect();
    let mut simplex = Simplex {
        x: std::iter::repeat_n(T::zero(), d).chain(b.iter().copied()).collect(),
        basis: (d..d + m).collect(),
        is_basic: (0..d + m).map(|j| j >= d).collect(),
        at_upper: vec![false; d + m],
        tableau,
        iterations: 0,
    };

    let phase1: Vec<T> = (0..d + m).map(|j| if j < d { T::zero() } else { T::one() }).collect();
    if simplex.run(&phase1, &upper)? == LpStatus::Unbounded {
        return Err(Error::LinearProgram("phase one reported unbounded".into()));
    }
    let infeasibility = simplex.x[d..].iter().fold(T::zero(), |acc, &v| acc + v);
    if infeasibility > T::lit(FEAS_TOL) * b.amax().max(T::one()) {
        return Ok(LpSolution::without_point(LpStatus::Infeasible, simplex.iterations));
    }

    for u in upper.iter_mut().skip(d) {
        *u = T::zero();
    }
    let phase2: Vec<T> = (0..d + m).map(|j| if j < d { lp.objective[j] } else { T::zero() }).collect();
    if simplex.run(&phase2, &upper)? == LpStatus::Unbounded {
        return Ok(LpSolution::without_point(LpStatus::Unbounded, simplex.iterations));
    }

    // recompute the basic values from B⁻¹ (held in the artificial columns)
    let mut rhs = b.clone();
    for j in 0..d {
        if !simplex.is_basic[j] && simplex.x[j] != T::zero() {
            rhs.axpy(-simplex.x[j], &structural.column(j), T::one());
        }
    }
    let basic = simplex.tableau.columns(d, m) * rhs;
    for (k, &j) in simplex.basis.iter().enumerate() {
        simplex.x[j] = basic[k];
    }

    let point = DVector::from_iterator(
        d,
        (0..d).map(|j| {
            let s = lower[j] + simplex.x[j];
            s.max(lower[j]).min(lp.bounds.upper()[j])
        }),
    );
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value: Some(lp.objective.dot(&point)),
        point: Some(point),
        iterations: simplex.iterations,
    })
}

/// Tableau state in the shifted variables `0 <= x_j <= upper_j`.
struct Simplex<T: Real> {
    tableau: DMatrix<T>,
    x: Vec<T>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    at_upper: Vec<bool>,
    iterations: usize,
}

enum Bound {
    Lower,
    Upper,
}

impl<T: Real> Simplex<T> {
    fn run(&mut self, cost: &[T], upper: &[T]) -> Result<LpStatus> {
        let (m, n) = self.tableau.shape();
        let pivot_tol = T::lit(PIVOT_TOL);
        let cost_scale = cost.iter().fold(T::one(), |acc, c| acc.max(c.abs()));
        let opt_tol = T::lit(FEAS_TOL) * cost_scale;
        let limit = 50 * (n + m) + 1000;
        let start = self.iterations;
        loop {
            if self.iterations - start > limit {
                return Err(Error::LinearProgram("iteration limit reached".into()));
            }
            // Bland: lowest-index improving nonbasic column
            let mut entering = None;
            for j in 0..n {
                if self.is_basic[j] || upper[j] <= T::zero() {
                    continue;
                }
                let mut dj = cost[j];
                for i in 0..m {
                    dj -= cost[self.basis[i]] * self.tableau[(i, j)];
                }
                if !self.at_upper[j] && dj < -opt_tol {
                    entering = Some((j, T::one()));
                    break;
                }
                if self.at_upper[j] && dj > opt_tol {
                    entering = Some((j, -T::one()));
                    break;
                }
            }
            let Some((j, sigma)) = entering else {
                return Ok(LpStatus::Optimal);
            };

            let mut theta = upper[j];
            let mut ratios: Vec<(usize, T, Bound)> = Vec::new();
            for i in 0..m {
                let entry = self.tableau[(i, j)];
                if entry.abs() <= pivot_tol {
                    continue;
                }
                let rate = entry * sigma;
                let bv = self.basis[i];
                let (limit, bound) = if rate > T::zero() {
                    (self.x[bv] / rate, Bound::Lower)
                } else {
                    if !upper[bv].finite() {
                        continue;
                    }
                    ((upper[bv] - self.x[bv]) / (-rate), Bound::Upper)
                };
                let limit = limit.max(T::zero());
                theta = theta.min(limit);
                ratios.push((i, limit, bound));
            }
            if !theta.finite() {
                return Ok(LpStatus::Unbounded);
            }
            let slack = T::lit(1e-12) * (T::one() + theta);
            let leaving = if upper[j] <= theta + slack {
                None
            } else {
                ratios
                    .into_iter()
                    .filter(|(_, limit, _)| *limit <= theta + slack)
                    .min_by_key(|(i, _, _)| self.basis[*i])
            };

            self.iterations += 1;
            self.x[j] += sigma * theta;
            for i in 0..m {
                let bv = self.basis[i];
                self.x[bv] -= sigma * theta * self.tableau[(i, j)];
            }
            match leaving {
                None => {
                    self.at_upper[j] = !self.at_upper[j];
                    self.x[j] = if self.at_upper[j] { upper[j] } else { T::zero() };
                }
                Some((row, _, bound)) => {
                    let out = self.basis[row];
                    self.is_basic[out] = false;
                    match bound {
                        Bound::Lower => {
                            self.at_upper[out] = false;
                            self.x[out] = T::zero();
                        }
                        Bound::Upper => {
                            self.at_upper[out] = true;
                            self.x[out] = upper[out];
                        }
                    }
                    self.pivot(row, j);
                    self.basis[row] = j;
                    self.is_basic[j] = true;
                    self.at_upper[j] = false;
                }
            }
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let (m, n) = self.tableau.shape();
        let p = self.tableau[(row, col)];
        for c in 0..n {
            self.tableau[(row, c)] /= p;
        }
        for i in 0..m {
            if i == row {
                continue;
            }
            let f = self.tableau[(i, col)];
            if f == T::zero() {
                continue;
            }
            for c in 0..n {
                let v = self.tableau[(row, c)];
                self.tableau[(i, c)] -= f * v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

    fn residual(lp: &LinearProgram<f64>, s: &DVector<f64>) -> f64 {
        lp.equalities().map_or(0.0, |(a, r)| (a * s - r).amax())
    }

    #[test]
    fn box_corner() {
        let bx = Hyperrectangle::symmetric(2, 1.0).unwrap();
        let lp = LinearProgram::new(DVector::from_vec(vec![1.0, 0.0]), bx).unwrap();
        let sol = lp.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.objective_value, Some(-1.0));
    }

    #[test]
    fn diagonal_level_set_beyond_reach_is_infeasible() {
        let bx = Hyperrectangle::symmetric(2, PI).unwrap();
        let v = DMatrix::from_row_slice(1, 2, &[FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
        let lp = LinearProgram::feasibility(v.clone(), DVector::from_vec(vec![10.0]), bx.clone()).unwrap();
        assert_eq!(lp.solve().unwrap().status, LpStatus::Infeasible);

        let lp = LinearProgram::feasibility(v, DVector::from_vec(vec![SQRT_2 * PI - 1e-6]), bx).unwrap();
        let sol = lp.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(residual(&lp, sol.point.as_ref().unwrap()) < 1e-12);
    }

    #[test]
    fn single_equality_pins_coordinate() {
        let bx = Hyperrectangle::from_slices(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let lp = LinearProgram::feasibility(a, DVector::from_vec(vec![0.5]), bx).unwrap();
        let sol = lp.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.point.unwrap()[0], 0.5);
    }

    #[test]
    fn closed_form_box_minimum() {
        let bx = Hyperrectangle::symmetric(2, PI).unwrap();
        let c = DVector::from_vec(vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
        let (v, p) = minimize_linear_over_box(&c, &bx).unwrap();
        assert!((v + SQRT_2 * PI).abs() < 1e-12);
        assert_eq!(p, DVector::from_vec(vec![-PI, -PI]));

        let (v, p) = minimize_linear_over_box(&DVector::zeros(2), &bx).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(&p, bx.lower());

        let big = Hyperrectangle::symmetric(250, 2.0).unwrap();
        let mut e1 = DVector::zeros(250);
        e1[0] = 1.0;
        assert_eq!(minimize_linear_over_box(&e1, &big).unwrap().0, -2.0);

        let neg = -&c;
        let (w, _) = minimize_linear_over_box(&neg, &bx).unwrap();
        assert!((v - 0.0).abs() < 1e-15 && (w + SQRT_2 * PI).abs() < 1e-12);
        assert!(minimize_linear_over_box(&DVector::from_vec(vec![f64::NAN, 0.0]), &bx).is_err());
    }

    #[test]
    fn zero_rows() {
        let bx = Hyperrectangle::<f64>::symmetric(3, 1.0).unwrap();
        let a = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let c = DVector::from_vec(vec![0.0, 1.0, -1.0]);
        let lp = LinearProgram::new(c.clone(), bx.clone())
            .unwrap()
            .with_equalities(a.clone(), DVector::from_vec(vec![0.0, 0.5]))
            .unwrap();
        let sol = lp.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value.unwrap() + 1.5).abs() < 1e-12);

        let lp = LinearProgram::new(c, bx)
            .unwrap()
            .with_equalities(a, DVector::from_vec(vec![1.0, 0.5]))
            .unwrap();
        assert_eq!(lp.solve().unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn redundant_rows_are_handled() {
        let bx = Hyperrectangle::symmetric(3, 1.0).unwrap();
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        let c = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let lp = LinearProgram::new(c, bx)
            .unwrap()
            .with_equalities(a, DVector::from_vec(vec![0.5, 1.0]))
            .unwrap();
        let sol = lp.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        // put as much as possible on the cheapest coordinate
        let s = sol.point.unwrap();
        assert!((s - DVector::from_vec(vec![1.0, 0.5, -1.0])).amax() < 1e-12);
    }

    #[test]
    fn rejects_bad_data() {
        let bx = Hyperrectangle::symmetric(2, 1.0).unwrap();
        assert!(LinearProgram::new(DVector::from_vec(vec![f64::INFINITY, 0.0]), bx.clone()).is_err());
        assert!(LinearProgram::feasibility(DMatrix::from_element(1, 2, f64::NAN), DVector::zeros(1), bx.clone()).is_err());
        assert!(LinearProgram::feasibility(DMatrix::zeros(3, 2), DVector::zeros(3), bx.clone()).is_err());
        assert!(LinearProgram::feasibility(DMatrix::zeros(1, 2), DVector::zeros(2), bx).is_err());
    }

    #[test]
    fn deterministic() {
        let bx = Hyperrectangle::symmetric(5, 1.0).unwrap();
        let a = DMatrix::from_fn(2, 5, |i, j| ((i * 5 + j) as f64).sin());
        let lp = LinearProgram::feasibility(a, DVector::from_vec(vec![0.1, -0.2]), bx).unwrap();
        assert_eq!(lp.solve().unwrap(), lp.solve().unwrap());
    }

    #[test]
    fn single_precision() {
        let bx = Hyperrectangle::<f32>::symmetric(3, 1.0).unwrap();
        let a = DMatrix::from_row_slice(1, 3, &[1.0f32, 1.0, 1.0]);
        let lp = LinearProgram::new(DVector::from_vec(vec![1.0f32, 0.0, 0.0]), bx)
            .unwrap()
            .with_equalities(a, DVector::from_vec(vec![1.5f32]))
            .unwrap();
        let sol = lp.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value.unwrap() + 0.5).abs() < 1e-5);
    }
}
