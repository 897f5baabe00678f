//! Hermitian positive-definiteness checks.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::Serialize;

use super::{ComplexMatrix, WorkloadError};

pub const DEFAULT_HERMITIAN_TOL: f64 = 1e-12;
pub const DEFAULT_THETA_SAMPLES: usize = 64;

/// Why a matrix is not Hermitian positive definite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum HpdError {
    /// `‖M - Mᴴ‖_F > tol·‖M‖_F`; `(row, col)` is the entry with the largest
    /// asymmetry `|m_ij - conj(m_ji)|`.
    NotHermitian {
        row: usize,
        col: usize,
        asymmetry: f64,
        relative_defect: f64,
    },
    /// Cholesky pivot `index` fell to `pivot <= tol·max|m_ii|`.
    NotPositiveDefinite { index: usize, pivot: f64 },
}

impl fmt::Display for HpdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HpdError::NotHermitian {
                row,
                col,
                asymmetry,
                relative_defect,
            } => write!(
                f,
                "not Hermitian: relative defect {relative_defect:.3e}, largest at ({row}, {col}) = {asymmetry:.3e}"
            ),
            HpdError::NotPositiveDefinite { index, pivot } => {
                write!(f, "not positive definite: pivot {index} = {pivot:.6e}")
            }
        }
    }
}

/// Hermitian Cholesky factorization `M = L·Lᴴ` with `L` lower triangular.
///
/// Hermiticity is checked first, relative to `‖M‖_F`. Each pivot must then
/// exceed `tol_h` times the largest diagonal magnitude.
pub fn cholesky_hpd(m: &ComplexMatrix, tol_h: f64) -> Result<ComplexMatrix, HpdError> {
    let n = m.n();
    let mut defect_sq = 0.0;
    let mut worst = (0, 0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            defect_sq += d * d;
            if d > worst.2 {
                worst = (i, j, d);
            }
        }
    }
    let norm = m.frobenius_norm();
    let defect = defect_sq.sqrt();
    if defect > tol_h * norm {
        return Err(HpdError::NotHermitian {
            row: worst.0,
            col: worst.1,
            asymmetry: worst.2,
            relative_defect: if norm > 0.0 { defect / norm } else { f64::INFINITY },
        });
    }

    let max_diag = (0..n).map(|i| m[(i, i)].norm()).fold(0.0, f64::max);
    let floor = tol_h * max_diag;
    let mut l = ComplexMatrix::zeros(n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > floor) {
            return Err(HpdError::NotPositiveDefinite { index: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = Complex64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Outcome of sampling the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "result", rename_all = "kebab-case")]
pub enum PreconditionVerdict {
    /// Every sampled `M(θ)` factorized. Necessary, not sufficient.
    HoldsOnSamples { samples: usize },
    /// First failing sample `j` of `n_theta`, at `θ = 2πj/n_theta`.
    Violated {
        sample: usize,
        theta: f64,
        evidence: HpdError,
    },
}

impl PreconditionVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, PreconditionVerdict::HoldsOnSamples { .. })
    }
}

/// `e^{2πi·j/n}`, exact at the quarter turns so that e.g. `cos(π/2)` is 0.
pub fn unit_root(j: usize, n: usize) -> Complex64 {
    let j = j % n;
    if (4 * j) % n == 0 {
        return match 4 * j / n {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    let theta = 2.0 * PI * j as f64 / n as f64;
    Complex64::new(theta.cos(), theta.sin())
}

/// `z·S2 + S1 + conj(z)·S2ᴴ` for unit-modulus `z`.
pub fn symbol_at(s1: &ComplexMatrix, s2: &ComplexMatrix, z: Complex64) -> ComplexMatrix {
    let s2h = s2.conj_transpose();
    &(&s2.scale(z) + s1) + &s2h.scale(z.conj())
}

/// Samples `θ_j = 2πj/n_theta` and runs [`cholesky_hpd`] on each `M(θ_j)`,
/// returning the first violation.
pub fn check_convergence_precondition(
    s1: &ComplexMatrix,
    s2: &ComplexMatrix,
    n_theta: usize,
) -> Result<PreconditionVerdict, WorkloadError> {
    s1.check_same_dim(s2, "S1 and S2")?;
    if n_theta == 0 {
        return Err(WorkloadError::InvalidInput("n_theta must be >= 1".into()));
    }
    for j in 0..n_theta {
        let m = symbol_at(s1, s2, unit_root(j, n_theta));
        if let Err(evidence) = cholesky_hpd(&m, DEFAULT_HERMITIAN_TOL) {
            return Ok(PreconditionVerdict::Violated {
                sample: j,
                theta: 2.0 * PI * j as f64 / n_theta as f64,
                evidence,
            });
        }
    }
    Ok(PreconditionVerdict::HoldsOnSamples { samples: n_theta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::generate::Xorshift64Star;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn recomposition_error(l: &ComplexMatrix, m: &ComplexMatrix) -> f64 {
        (&(l * &l.conj_transpose()) - m).frobenius_norm()
    }

    #[test]
    fn identity_factors_to_identity() {
        for n in [1, 2, 7, 16] {
            let i = ComplexMatrix::identity(n);
            assert_eq!(cholesky_hpd(&i, DEFAULT_HERMITIAN_TOL).unwrap(), i);
        }
    }

    #[test]
    fn indefinite_diagonal() {
        let m = ComplexMatrix::from_diag(&[c(1.0, 0.0), c(-1.0, 0.0)]);
        assert_eq!(
            cholesky_hpd(&m, DEFAULT_HERMITIAN_TOL).unwrap_err(),
            HpdError::NotPositiveDefinite { index: 1, pivot: -1.0 }
        );
    }

    #[test]
    fn non_hermitian_is_distinct() {
        let m = ComplexMatrix::from_rows(vec![
            vec![c(2.0, 0.0), c(1.0, 0.0)],
            vec![c(0.0, 0.0), c(2.0, 0.0)],
        ])
        .unwrap();
        match cholesky_hpd(&m, DEFAULT_HERMITIAN_TOL).unwrap_err() {
            HpdError::NotHermitian { row, col, asymmetry, .. } => {
                assert_eq!((row, col), (0, 1));
                assert_eq!(asymmetry, 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gram_plus_identity_recomposes() {
        let mut rng = Xorshift64Star::new(11);
        let a = ComplexMatrix::from_fn(8, |_, _| rng.next_complex());
        let m = &(&a.conj_transpose() * &a) + &ComplexMatrix::identity(8);
        let l = cholesky_hpd(&m, DEFAULT_HERMITIAN_TOL).unwrap();
        for i in 0..8 {
            for j in i + 1..8 {
                assert_eq!(l[(i, j)], c(0.0, 0.0));
            }
            assert!(l[(i, i)].re > 0.0 && l[(i, i)].im == 0.0);
        }
        assert!(recomposition_error(&l, &m) <= 1e-10 * m.frobenius_norm());
    }

    #[test]
    fn unit_roots_are_exact_at_quarters() {
        assert_eq!(unit_root(1, 4), c(0.0, 1.0));
        assert_eq!(unit_root(2, 4), c(-1.0, 0.0));
        assert_eq!(unit_root(16, 64), c(0.0, 1.0));
        assert_eq!(unit_root(48, 64), c(0.0, -1.0));
        let z = unit_root(1, 8);
        assert!((z - c(0.5f64.sqrt(), 0.5f64.sqrt())).norm() < 1e-15);
    }

    #[test]
    fn identity_s1_zero_s2_holds() {
        let s1 = ComplexMatrix::identity(3);
        let s2 = ComplexMatrix::zeros(3);
        for n_theta in [1, 4, 64, 257] {
            assert!(check_convergence_precondition(&s1, &s2, n_theta).unwrap().holds());
        }
    }

    #[test]
    fn analytic_violation_at_quarter_turn() {
        // M(θ) = 2cos θ, which vanishes at θ = π/2.
        let s1 = ComplexMatrix::zeros(1);
        let s2 = ComplexMatrix::identity(1);
        for n_theta in [4, 8, 64] {
            match check_convergence_precondition(&s1, &s2, n_theta).unwrap() {
                PreconditionVerdict::Violated { sample, theta, evidence } => {
                    assert_eq!(sample, n_theta / 4);
                    assert!((theta - PI / 2.0).abs() < 1e-15);
                    assert_eq!(evidence, HpdError::NotPositiveDefinite { index: 0, pivot: 0.0 });
                }
                other => panic!("n_theta {n_theta}: {other:?}"),
            }
        }
        // θ = 0 alone gives M = 2 > 0.
        assert!(check_convergence_precondition(&s1, &s2, 1).unwrap().holds());
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            check_convergence_precondition(&ComplexMatrix::zeros(2), &ComplexMatrix::zeros(3), 4),
            Err(WorkloadError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn violation_persists_when_doubling_samples() {
        let mut rng = Xorshift64Star::new(5);
        for _ in 0..20 {
            let b = ComplexMatrix::from_fn(3, |_, _| rng.next_complex());
            let s1 = &(&b + &b.conj_transpose()) + &ComplexMatrix::identity(3).scale(c(2.5, 0.0));
            let s2 = ComplexMatrix::from_fn(3, |_, _| rng.next_complex());
            let coarse = check_convergence_precondition(&s1, &s2, 16).unwrap();
            if !coarse.holds() {
                assert!(!check_convergence_precondition(&s1, &s2, 32).unwrap().holds());
            }
        }
    }
}
