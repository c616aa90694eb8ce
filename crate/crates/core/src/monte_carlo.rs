//! Brute-force reference: factor and solve `K(θ⁽ʳ⁾) u = F(θ⁽ʳ⁾)` per sample.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::reduce::map_indexed;
use crate::system::StochasticSystem;

/// Largest admissible fraction of samples whose stiffness is not SPD.
pub const MAX_REJECTED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct MCResult {
    /// One row per accepted sample, one column per requested DOF.
    pub responses: DenseMatrix,
    /// Sample index of each row of `responses`.
    pub samples: Vec<usize>,
    /// Samples whose stiffness failed factorization.
    pub rejected: Vec<usize>,
    /// Seconds spent (0 without the `std` feature).
    pub wall_time: f64,
}

/// Solves every requested sample directly and keeps the requested DOFs.
pub fn mc_solve(sys: &StochasticSystem, samples: &[usize], dofs: &[usize]) -> Result<MCResult> {
    #[cfg(feature = "std")]
    let start = std::time::Instant::now();
    if let Some(&r) = samples.iter().find(|&&r| r >= sys.r()) {
        return Err(Error::InvalidInput(alloc::format!("sample {r} out of range")));
    }
    if let Some(&i) = dofs.iter().find(|&&i| i >= sys.n()) {
        return Err(Error::InvalidInput(alloc::format!("dof {i} out of range")));
    }
    let solved: Vec<Result<Option<Vec<f64>>>> = map_indexed(samples.len(), |a| {
        let r = samples[a];
        let attempt = sys
            .factor_at(r)
            .and_then(|(k, factor)| factor.solve_refined(&k, &sys.f_at(r)));
        match attempt {
            Ok(u) => Ok(Some(dofs.iter().map(|&i| u[i]).collect())),
            Err(Error::NotPositiveDefinite { .. } | Error::ResidualTooLarge(_)) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let mut rows = Vec::with_capacity(samples.len() * dofs.len());
    let mut kept = Vec::with_capacity(samples.len());
    let mut rejected = Vec::new();
    for (a, s) in solved.into_iter().enumerate() {
        match s? {
            Some(u) => {
                rows.extend(u);
                kept.push(samples[a]);
            }
            None => rejected.push(samples[a]),
        }
    }
    if rejected.len() as f64 > MAX_REJECTED_FRACTION * samples.len() as f64 {
        return Err(Error::TooManyRejected {
            rejected: rejected.len(),
            total: samples.len(),
        });
    }
    #[cfg(feature = "std")]
    let wall_time = start.elapsed().as_secs_f64();
    #[cfg(not(feature = "std"))]
    let wall_time = 0.0;
    Ok(MCResult {
        responses: DenseMatrix::from_row_major(kept.len(), dofs.len(), rows),
        samples: kept,
        rejected,
        wall_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{solve_spd, SparseMatrix};
    use crate::random_field::{draw_samples, SampleMatrix};

    #[test]
    fn deterministic_rows_repeat_the_fem_solution() {
        let k = SparseMatrix::from_triplets(2, &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)]);
        let f = vec![1.0, 3.0];
        let s = draw_samples(0, 0, 5, 0, &[]).unwrap();
        let sys = StochasticSystem::new(vec![k.clone()], vec![f.clone()], &s).unwrap();
        let mc = mc_solve(&sys, &[0, 1, 2, 3, 4], &[0, 1]).unwrap();
        let u = solve_spd(&k, &f).unwrap();
        for r in 0..5 {
            assert_eq!(mc.responses.row(r), u.as_slice());
        }
        assert!(mc.rejected.is_empty());
    }

    #[test]
    fn spring_closed_form_and_rejection() {
        let zero = SparseMatrix::from_triplets(1, &[(0, 0, 0.0)]);
        let k = SparseMatrix::from_triplets(1, &[(0, 0, 2.0)]);
        let xi = SampleMatrix::from_rows(&[vec![3.0], vec![1.5], vec![-1.0]], 1).unwrap();
        let eta = SampleMatrix::zeros(3, 0);
        let sys = StochasticSystem::from_parts(vec![zero, k], vec![vec![6.0]], &xi, &eta, 0, 0).unwrap();
        let mc = mc_solve(&sys, &[0, 1], &[0]).unwrap();
        assert_eq!(mc.responses.as_slice(), &[1.0, 2.0]);
        assert!(matches!(
            mc_solve(&sys, &[0, 1, 2], &[0]),
            Err(Error::TooManyRejected { rejected: 1, total: 3 })
        ));
    }
}
