//! The reduced domain `Ω_a = V_aᵀ Ω`, its enclosing box, membership tests,
//! the lift back into `Ω`, and rejection sampling of reduced points.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::domain::Hyperrectangle;
use crate::error::{Error, Result};
use crate::lp::{minimize_linear_over_box, LinearProgram, LpStatus};
use crate::models::Model;
use crate::rng;
use crate::scalar::Real;
use crate::subspace::ActiveSubspace;

const CENTER_TOL: f64 = 1e-9;
const STALL_DRAWS: u64 = 1_000_000;
const STALL_RATE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct ReducedDomain<T: Real> {
    subspace: ActiveSubspace<T>,
    full_domain: Hyperrectangle<T>,
    bounding_box: Hyperrectangle<T>,
    projection: DMatrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Membership<T: Real> {
    /// `V_a t` already lies in `Ω`.
    DirectlyInside,
    /// `V_a t + V_b z` lies in `Ω` for the contained `z`.
    LiftableInside(DVector<T>),
    Outside,
}

impl<T: Real> Membership<T> {
    pub fn is_inside(&self) -> bool {
        !matches!(self, Membership::Outside)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SamplerStats {
    pub draws: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub lp_calls: u64,
    pub acceptance_rate: f64,
}

impl SamplerStats {
    fn record(&mut self, accepted: bool, lp_used: bool) {
        self.draws += 1;
        if accepted {
            self.accepted += 1;
        } else {
            self.rejected += 1;
        }
        if lp_used {
            self.lp_calls += 1;
        }
        self.acceptance_rate = self.accepted as f64 / self.draws as f64;
    }

    /// Sums the counters of independent runs.
    pub fn merge(&self, other: &SamplerStats) -> SamplerStats {
        let draws = self.draws + other.draws;
        let accepted = self.accepted + other.accepted;
        SamplerStats {
            draws,
            accepted,
            rejected: self.rejected + other.rejected,
            lp_calls: self.lp_calls + other.lp_calls,
            acceptance_rate: if draws == 0 { 0.0 } else { accepted as f64 / draws as f64 },
        }
    }
}

/// Reduced points, their lifts into `Ω`, and (once evaluated) `g` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDesign<T: Real> {
    pub reduced_points: Vec<DVector<T>>,
    pub lifted_points: Vec<DVector<T>>,
    pub values: Vec<T>,
}

impl<T: Real> ReducedDesign<T> {
    pub fn len(&self) -> usize {
        self.reduced_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reduced_points.is_empty()
    }

    /// Evaluates `f` at the lifted points in parallel, replacing `values`.
    pub fn evaluate<M: Model<T> + ?Sized>(&mut self, model: &M) -> Result<()> {
        self.values = self
            .lifted_points
            .par_iter()
            .map(|s| model.value(s))
            .collect::<Result<_>>()?;
        Ok(())
    }

    /// Appends `other` (values included when both carry them).
    pub fn extend(&mut self, other: ReducedDesign<T>) {
        self.reduced_points.extend(other.reduced_points);
        self.lifted_points.extend(other.lifted_points);
        self.values.extend(other.values);
    }

    /// Checks `V_aᵀ s_j = y_j` within `1e-8` and `s_j ∈ Ω` within `1e-9`.
    pub fn validate(&self, domain: &ReducedDomain<T>) -> Result<()> {
        if self.reduced_points.len() != self.lifted_points.len()
            || (!self.values.is_empty() && self.values.len() != self.reduced_points.len())
        {
            return Err(Error::InvalidInput("design columns have different lengths".into()));
        }
        for (j, (y, s)) in self.reduced_points.iter().zip(&self.lifted_points).enumerate() {
            domain.check_lift(y, s).map_err(|e| {
                Error::InvalidInput(format!("design point {j}: {e}"))
            })?;
        }
        Ok(())
    }
}

impl<T: Real> ReducedDomain<T> {
    /// Encloses `V_aᵀ Ω` in the box `[v_iᵀ s_i*, −v_iᵀ s_i*]`, where `s_i*`
    /// minimizes `v_iᵀ s` over `Ω`. The full domain must be centred at 0.
    pub fn build(subspace: ActiveSubspace<T>, full_domain: Hyperrectangle<T>) -> Result<Self> {
        if subspace.dim() != full_domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: full_domain.dim(),
                found: subspace.dim(),
            });
        }
        let offset = full_domain.center_offset();
        if offset > T::lit(CENTER_TOL) {
            return Err(Error::NotCentered(offset.as_f64()));
        }
        let a = subspace.active_dim();
        let mut lower = DVector::zeros(a);
        for i in 0..a {
            let (value, _) = minimize_linear_over_box(&subspace.basis_a().column(i).into_owned(), &full_domain)?;
            lower[i] = value;
        }
        let upper = -&lower;
        let bounding_box = Hyperrectangle::new(lower, upper)?;
        let projection = subspace.basis_a().transpose();
        Ok(Self {
            subspace,
            full_domain,
            bounding_box,
            projection,
        })
    }

    pub fn subspace(&self) -> &ActiveSubspace<T> {
        &self.subspace
    }

    pub fn full_domain(&self) -> &Hyperrectangle<T> {
        &self.full_domain
    }

    pub fn bounding_box(&self) -> &Hyperrectangle<T> {
        &self.bounding_box
    }

    pub fn active_dim(&self) -> usize {
        self.subspace.active_dim()
    }

    /// `V_aᵀ s`.
    pub fn project(&self, s: &DVector<T>) -> DVector<T> {
        &self.projection * s
    }

    pub fn membership(&self, t: &DVector<T>) -> Result<Membership<T>> {
        self.classify(t).map(|(m, _)| m)
    }

    /// Membership plus whether a linear program was needed.
    fn classify(&self, t: &DVector<T>) -> Result<(Membership<T>, bool)> {
        let a = self.active_dim();
        if t.len() != a {
            return Err(Error::DimensionMismatch {
                expected: a,
                found: t.len(),
            });
        }
        if t.iter().any(|v| !v.finite()) {
            return Err(Error::NonFinite("reduced point"));
        }
        let direct = self.subspace.basis_a() * t;
        if self.full_domain.contains(&direct, T::zero()) {
            return Ok((Membership::DirectlyInside, false));
        }
        if !self.bounding_box.contains(t, T::lit(1e-12) * (T::one() + t.amax())) {
            return Ok((Membership::Outside, false));
        }
        let lp = LinearProgram::feasibility(self.projection.clone(), t.clone(), self.full_domain.clone())?;
        let solution = lp.solve()?;
        match solution.status {
            LpStatus::Optimal => {
                let s = solution.point.expect("optimal solution carries a point");
                Ok((Membership::LiftableInside(self.subspace.basis_b().tr_mul(&s)), true))
            }
            LpStatus::Infeasible => Ok((Membership::Outside, true)),
            LpStatus::Unbounded => Err(Error::LinearProgram("feasibility program unbounded".into())),
        }
    }

    /// `V_a t` or `V_a t + V_b z` according to [`membership`](Self::membership).
    pub fn lift(&self, t: &DVector<T>) -> Result<DVector<T>> {
        let membership = self.membership(t)?;
        self.lift_with(t, &membership)
    }

    fn lift_with(&self, t: &DVector<T>, membership: &Membership<T>) -> Result<DVector<T>> {
        match membership {
            Membership::DirectlyInside => Ok(self.subspace.basis_a() * t),
            Membership::LiftableInside(z) => Ok(self.subspace.basis_a() * t + self.subspace.basis_b() * z),
            Membership::Outside => Err(Error::OutsideDomain),
        }
    }

    /// Returns an error describing the first violated lift invariant.
    pub fn check_lift(&self, t: &DVector<T>, s: &DVector<T>) -> Result<()> {
        if s.len() != self.full_domain.dim() || t.len() != self.active_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.full_domain.dim(),
                found: s.len(),
            });
        }
        let violation = self.full_domain.violation(s);
        if violation > T::lit(1e-9) {
            return Err(Error::InvalidInput(format!("lifted point leaves the domain by {violation}")));
        }
        let mismatch = (self.project(s) - t).amax();
        if mismatch > T::lit(1e-8) {
            return Err(Error::InvalidInput(format!("projection mismatch {mismatch}")));
        }
        Ok(())
    }

    /// Rejection sampling of `n` reduced points, uniform in `Ω_a`.
    pub fn sample_reduced<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(Vec<DVector<T>>, SamplerStats)> {
        let (design, stats) = self.sample_design(n, rng)?;
        Ok((design.reduced_points, stats))
    }

    /// As [`sample_reduced`](Self::sample_reduced), also returning the lifted
    /// points (values left empty).
    pub fn sample_design<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(ReducedDesign<T>, SamplerStats)> {
        if n == 0 {
            return Err(Error::EmptySamples);
        }
        let mut stats = SamplerStats::default();
        let mut design = ReducedDesign {
            reduced_points: Vec::with_capacity(n),
            lifted_points: Vec::with_capacity(n),
            values: Vec::new(),
        };
        while design.reduced_points.len() < n {
            let t = self.bounding_box.sample_uniform(rng);
            let (membership, lp_used) = self.classify(&t)?;
            let inside = membership.is_inside();
            stats.record(inside, lp_used);
            if inside {
                let s = self.lift_with(&t, &membership)?;
                design.reduced_points.push(t);
                design.lifted_points.push(s);
            }
            if stats.draws >= STALL_DRAWS && stats.acceptance_rate < STALL_RATE {
                return Err(Error::SamplerStalled {
                    draws: stats.draws,
                    accepted: stats.accepted,
                });
            }
        }
        Ok((design, stats))
    }

    /// Splits `n` across `workers` independent streams of `seed`; the result
    /// depends on `(seed, workers)` but not on scheduling.
    pub fn sample_design_parallel(&self, n: usize, seed: u64, workers: usize) -> Result<(ReducedDesign<T>, SamplerStats)> {
        if n == 0 {
            return Err(Error::EmptySamples);
        }
        let workers = workers.clamp(1, n);
        let parts: Vec<(ReducedDesign<T>, SamplerStats)> = (0..workers)
            .into_par_iter()
            .map(|w| {
                let count = n / workers + usize::from(w < n % workers);
                self.sample_design(count, &mut rng::stream(seed, w as u64))
            })
            .collect::<Result<_>>()?;
        let mut iter = parts.into_iter();
        let (mut design, mut stats) = iter.next().expect("at least one worker");
        for (d, s) in iter {
            design.extend(d);
            stats = stats.merge(&s);
        }
        Ok((design, stats))
    }

    /// Projects existing full-space sites into `Ω_a`; each site is its own lift.
    pub fn project_design(&self, points: &[DVector<T>], values: &[T]) -> Result<ReducedDesign<T>> {
        if points.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: values.len(),
            });
        }
        for s in points {
            if !self.full_domain.contains(s, T::lit(1e-9)) {
                return Err(Error::InvalidInput("site outside the full domain".into()));
            }
        }
        Ok(ReducedDesign {
            reduced_points: points.iter().map(|s| self.project(s)).collect(),
            lifted_points: points.to_vec(),
            values: values.to_vec(),
        })
    }
}
