//! Brute-force reference for small bounded LPs with equality rows: every
//! basic solution is enumerated by choosing which variables are basic and
//! pinning the rest to one of their bounds.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleOutcome {
    Infeasible,
    Optimal(f64),
}

pub const ORACLE_FEAS_TOL: f64 = 1e-9;

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    if n < k {
        return Vec::new();
    }
    let mut out = combinations(n - 1, k);
    for mut c in combinations(n - 1, k - 1) {
        c.push(n - 1);
        out.push(c);
    }
    out
}

/// Minimum of `c^T s` subject to `A s = r`, `lower <= s <= upper`. `A` must
/// have full row rank.
pub fn enumerate_vertices(c: &DVector<f64>, a: &DMatrix<f64>, r: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> OracleOutcome {
    let (m, d) = a.shape();
    let mut best: Option<f64> = None;
    for basic in combinations(d, m) {
        let free: Vec<usize> = (0..d).filter(|j| !basic.contains(j)).collect();
        let ab = DMatrix::from_fn(m, m, |i, j| a[(i, basic[j])]);
        let lu = ab.clone().lu();
        if m > 0 && lu.determinant().abs() < 1e-12 {
            continue;
        }
        for mask in 0..(1u32 << free.len()) {
            let mut s = DVector::zeros(d);
            for (bit, &j) in free.iter().enumerate() {
                s[j] = if mask & (1 << bit) == 0 { lower[j] } else { upper[j] };
            }
            if m > 0 {
                let rhs = r - a * &s;
                let Some(sb) = lu.solve(&rhs) else { continue };
                for (i, &j) in basic.iter().enumerate() {
                    s[j] = sb[i];
                }
            }
            let inside = (0..d).all(|j| s[j] >= lower[j] - ORACLE_FEAS_TOL && s[j] <= upper[j] + ORACLE_FEAS_TOL);
            if inside {
                let value = c.dot(&s);
                best = Some(best.map_or(value, |b: f64| b.min(value)));
            }
        }
    }
    best.map_or(OracleOutcome::Infeasible, OracleOutcome::Optimal)
}

/// A random LP with `d <= 6` variables and at most two equality rows.
/// Roughly half of the instances are infeasible.
pub struct RandomLp {
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub r: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

pub fn random_lp(seed: u64) -> RandomLp {
    use rand::Rng;
    let mut rng = insub_core::rng::seeded(seed);
    let d = rng.random_range(1..=6usize);
    let m = rng.random_range(0..=d.min(2));
    let lower = DVector::from_fn(d, |_, _| rng.random_range(-2.0..0.0));
    let upper = DVector::from_fn(d, |i, _| lower[i] + rng.random_range(0.2..3.0));
    let a = DMatrix::from_fn(m, d, |_, _| rng.random_range(-1.0..1.0));
    let s0 = DVector::from_fn(d, |i, _| {
        let mid = 0.5 * (lower[i] + upper[i]);
        let half = 0.5 * (upper[i] - lower[i]);
        mid + half * rng.random_range(-2.0..2.0)
    });
    let r = &a * s0;
    let c = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    RandomLp { c, a, r, lower, upper }
}

/// Compares the solver against the enumeration; returns a description of
/// the first disagreement.
pub fn check_against_oracle(p: &RandomLp) -> Result<(), String> {
    use insub_core::{Hyperrectangle, LinearProgram, LpStatus};
    let bounds = Hyperrectangle::new(p.lower.clone(), p.upper.clone()).map_err(|e| e.to_string())?;
    let mut lp = LinearProgram::new(p.c.clone(), bounds).map_err(|e| e.to_string())?;
    if p.a.nrows() > 0 {
        lp = lp.with_equalities(p.a.clone(), p.r.clone()).map_err(|e| e.to_string())?;
    }
    let sol = lp.solve().map_err(|e| e.to_string())?;
    match (enumerate_vertices(&p.c, &p.a, &p.r, &p.lower, &p.upper), sol.status) {
        (OracleOutcome::Infeasible, LpStatus::Infeasible) => Ok(()),
        (OracleOutcome::Optimal(best), LpStatus::Optimal) => {
            let value = sol.objective_value.ok_or("missing objective")?;
            let point = sol.point.ok_or("missing point")?;
            if (value - best).abs() > 1e-8 * (1.0 + best.abs()) {
                return Err(format!("objective {value} vs oracle {best}"));
            }
            if (&p.a * &point - &p.r).amax() > 1e-8 {
                return Err("equality residual too large".into());
            }
            if (0..point.len()).any(|j| point[j] < p.lower[j] - 1e-9 || point[j] > p.upper[j] + 1e-9) {
                return Err("point leaves the box".into());
            }
            Ok(())
        }
        (oracle, status) => Err(format!("status {status:?} vs oracle {oracle:?}")),
    }
}
