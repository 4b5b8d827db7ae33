//! Convergence and completion studies.

use insub_core::completion::{reveal_uniform, svt_complete, svt_complete_normalized, SvtParams};
use insub_core::subspace::{leading_left_vectors, subspace_distance};
use insub_core::Result;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// One row of the sample-count convergence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub index: usize,
    pub m: usize,
    pub m_next: usize,
    /// Distance to the estimate at the next schedule point.
    pub e_rel: f64,
    /// Distance to the estimate from all columns of `jacobian`.
    pub e_abs: f64,
}

/// Subspace distances of the leading `a` left singular vectors of the first
/// `m` columns, one row per consecutive pair of `schedule` (entries beyond
/// the column count are skipped).
pub fn convergence(jacobian: &DMatrix<f64>, schedule: &[usize], a: usize) -> Result<Vec<ConvergenceRow>> {
    let k = jacobian.ncols();
    let reference = leading_left_vectors(jacobian, a)?;
    let counts: Vec<usize> = schedule.iter().copied().filter(|&m| m >= 1 && m <= k).collect();
    let bases = counts
        .iter()
        .map(|&m| leading_left_vectors(&jacobian.columns(0, m).into_owned(), a))
        .collect::<Result<Vec<_>>>()?;
    (1..counts.len())
        .map(|i| {
            Ok(ConvergenceRow {
                index: i,
                m: counts[i - 1],
                m_next: counts[i],
                e_rel: subspace_distance(&bases[i - 1], &bases[i])?,
                e_abs: subspace_distance(&bases[i - 1], &reference)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletionRow {
    pub gamma: f64,
    pub revealed: usize,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Distance between the completed and the reference `a`-dimensional
    /// left singular subspaces.
    pub error: f64,
}

/// Reveals a fraction `gamma` of `matrix`, completes it and compares the
/// leading `reference.ncols()` left singular vectors with `reference`.
pub fn completion_error<R: Rng + ?Sized>(
    matrix: &DMatrix<f64>,
    reference: &DMatrix<f64>,
    gamma: f64,
    params: &SvtParams<f64>,
    normalize: bool,
    rng: &mut R,
) -> Result<CompletionRow> {
    let a = reference.ncols();
    let observed = reveal_uniform(matrix, gamma, rng)?;
    let result = if normalize {
        svt_complete_normalized(&observed, params)?
    } else {
        svt_complete(&observed, params)?
    };
    let basis = if result.rank() >= a {
        result.left_vectors.columns(0, a).into_owned()
    } else {
        leading_left_vectors(&result.reconstruct(), a)?
    };
    Ok(CompletionRow {
        gamma,
        revealed: observed.len(),
        iterations: result.iterations,
        residual: result.residual,
        converged: result.converged,
        error: subspace_distance(&basis, reference)?,
    })
}

/// `U V^T` with standard normal `rows x rank` and `cols x rank` factors.
pub fn synthetic_low_rank<R: Rng + ?Sized>(rows: usize, cols: usize, rank: usize, rng: &mut R) -> DMatrix<f64> {
    let u = DMatrix::from_fn(rows, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    let v = DMatrix::from_fn(cols, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    u * v.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use insub_core::rng::seeded;

    #[test]
    fn convergence_of_exact_rank_one() {
        let mut rng = seeded(3);
        let dir = nalgebra::DVector::from_vec(vec![0.6, 0.8, 0.0]);
        let j = DMatrix::from_fn(3, 40, |i, _| dir[i]) * DMatrix::from_diagonal(&nalgebra::DVector::from_fn(40, |_, _| rng.random::<f64>() + 0.1));
        let rows = convergence(&j, &[10, 20, 40, 80], 1).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[1].m, rows[1].m_next), (20, 40));
        for r in rows {
            assert!(r.e_abs < 1e-12 && r.e_rel < 1e-12);
        }
    }

    #[test]
    fn full_reveal_recovers_synthetic_subspace() {
        let mut rng = seeded(1);
        let m = synthetic_low_rank(20, 60, 3, &mut rng);
        let reference = leading_left_vectors(&m, 3).unwrap();
        let row = completion_error(&m, &reference, 1.0, &SvtParams::default(), true, &mut rng).unwrap();
        assert_eq!(row.revealed, 1200);
        assert!(row.error < 1e-6, "{}", row.error);
    }
}
