use std::time::Instant;

use serde::Serialize;

use super::{ComplexMatrix, WorkloadError};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1000;

/// Outcome of [`fixed_point_solve`]. The iteration count is always part of
/// the value, converged or not.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkloadResult {
    pub iterations: usize,
    pub converged: bool,
    /// Last relative update `‖X_k+1 - X_k‖_F / ‖X_k‖_F`.
    pub residual: f64,
    #[serde(skip)]
    pub solution: ComplexMatrix,
    pub elapsed_seconds: f64,
}

/// One application of the map `X ↦ (A1 - A2·X·A2ᴴ)⁻¹`.
pub fn fixed_point_map(
    a1: &ComplexMatrix,
    a2: &ComplexMatrix,
    a2h: &ComplexMatrix,
    x: &ComplexMatrix,
    iteration: usize,
) -> Result<ComplexMatrix, WorkloadError> {
    (a1 - &(&(a2 * x) * a2h))
        .inverse()
        .map_err(|s| WorkloadError::Singular {
            iteration,
            pivot_index: s.pivot_index,
            pivot: s.pivot,
        })
}

/// Iterates `X_0 = A1⁻¹`, `X_k+1 = (A1 - A2·X_k·A2ᴴ)⁻¹` until the relative
/// update drops to `tol` or `max_iter` map applications have been made.
pub fn fixed_point_solve(
    a1: &ComplexMatrix,
    a2: &ComplexMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<WorkloadResult, WorkloadError> {
    a1.check_same_dim(a2, "A1 and A2")?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(WorkloadError::InvalidInput(format!("tolerance {tol} must be positive")));
    }
    if max_iter == 0 {
        return Err(WorkloadError::InvalidInput("max_iter must be >= 1".into()));
    }
    let start = Instant::now();
    let a2h = a2.conj_transpose();
    let mut x = a1.inverse().map_err(|s| WorkloadError::Singular {
        iteration: 0,
        pivot_index: s.pivot_index,
        pivot: s.pivot,
    })?;
    let mut residual = f64::INFINITY;
    for k in 1..=max_iter {
        let next = fixed_point_map(a1, a2, &a2h, &x, k)?;
        residual = (&next - &x).frobenius_norm() / x.frobenius_norm();
        x = next;
        if residual <= tol {
            return Ok(WorkloadResult {
                iterations: k,
                converged: true,
                residual,
                solution: x,
                elapsed_seconds: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(WorkloadResult {
        iterations: max_iter,
        converged: false,
        residual,
        solution: x,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// `‖X - (A1 - A2·X·A2ᴴ)⁻¹‖_F / ‖X‖_F` for a candidate solution.
pub fn fixed_point_defect(
    a1: &ComplexMatrix,
    a2: &ComplexMatrix,
    x: &ComplexMatrix,
) -> Result<f64, WorkloadError> {
    let image = fixed_point_map(a1, a2, &a2.conj_transpose(), x, 0)?;
    Ok((x - &image).frobenius_norm() / x.frobenius_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::generate::{generate_inputs, GenerateMode, Xorshift64Star};
    use crate::workload::build_a;
    use num_complex::Complex64;

    fn scalar(v: f64) -> ComplexMatrix {
        ComplexMatrix::from_rows(vec![vec![Complex64::new(v, 0.0)]]).unwrap()
    }

    /// Scalar oracle: x ← 1/(a1 - a2²·x) from x = 1/a1.
    fn scalar_oracle(a1: f64, a2: f64, steps: usize) -> Vec<f64> {
        let mut xs = vec![1.0 / a1];
        for _ in 0..steps {
            let x = *xs.last().unwrap();
            xs.push(1.0 / (a1 - a2 * a2 * x));
        }
        xs
    }

    #[test]
    fn zero_coupling_converges_in_one_step() {
        let mut rng = Xorshift64Star::new(1);
        let a1 = &ComplexMatrix::from_fn(4, |_, _| rng.next_complex())
            + &ComplexMatrix::identity(4).scale(Complex64::new(6.0, 0.0));
        let r = fixed_point_solve(&a1, &ComplexMatrix::zeros(4), 1e-10, 100).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.residual, 0.0);
        assert_eq!(r.solution, a1.inverse().unwrap());
    }

    #[test]
    fn scalar_golden_ratio_root() {
        let expected = (3.0 - 5f64.sqrt()) / 2.0;
        let oracle = scalar_oracle(3.0, 1.0, 200);
        assert!((oracle.last().unwrap() - expected).abs() < 1e-15);

        let r = fixed_point_solve(&scalar(3.0), &scalar(1.0), 1e-10, 1000).unwrap();
        assert!(r.converged);
        let x = r.solution[(0, 0)];
        assert!((x.re - expected).abs() < 1e-10, "{x}");
        assert_eq!(x.im, 0.0);
        // The solver follows the oracle's iterates step for step.
        assert!((x.re - oracle[r.iterations]).abs() < 1e-15);
        assert!(fixed_point_defect(&scalar(3.0), &scalar(1.0), &r.solution).unwrap() <= 2.0 * 1e-10);
    }

    #[test]
    fn marginal_fixed_point_hits_max_iter() {
        let oracle = scalar_oracle(2.0, 1.0, 50);
        // Updates decay like 1/k², far above the tolerance after 50 steps.
        let last_update = (oracle[50] - oracle[49]).abs() / oracle[49].abs();
        assert!(last_update > 1e-10, "{last_update}");

        let r = fixed_point_solve(&scalar(2.0), &scalar(1.0), 1e-10, 50).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 50);
        assert!((r.residual - last_update).abs() < 1e-12);
        assert!(r.residual > 1e-10);
    }

    #[test]
    fn singular_inputs_report_iteration() {
        let err = fixed_point_solve(&scalar(0.0), &scalar(1.0), 1e-10, 10).unwrap_err();
        assert!(matches!(err, WorkloadError::Singular { iteration: 0, .. }));
        // a1 = 1, a2 = 1: x0 = 1, then 1 - 1·1 = 0 is singular.
        let err = fixed_point_solve(&scalar(1.0), &scalar(1.0), 1e-10, 10).unwrap_err();
        assert!(matches!(err, WorkloadError::Singular { iteration: 1, .. }));
    }

    #[test]
    fn converged_generated_inputs_satisfy_residual_bound() {
        for seed in 0..10 {
            for n in [2, 4, 8] {
                let input = generate_inputs(seed, n, GenerateMode::GuaranteedConvergent);
                let a1 = build_a(input.alpha1, &input.s1, &input.h1).unwrap();
                let a2 = build_a(input.alpha2, &input.s2, &input.h2).unwrap();
                let r = fixed_point_solve(&a1, &a2, input.tol, input.max_iter).unwrap();
                assert!(r.converged, "seed {seed} n {n}");
                assert!(r.residual <= input.tol && r.iterations <= input.max_iter);
                let defect = fixed_point_defect(&a1, &a2, &r.solution).unwrap();
                assert!(defect <= 2.0 * input.tol, "seed {seed} n {n}: {defect}");
            }
        }
    }
}
