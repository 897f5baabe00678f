//! Self-contained numerical benchmark.
//!
//! Builds `A_i = α_i·S_i + H_i`, checks that `z·S2 + S1 + z⁻¹·S2ᴴ` is
//! Hermitian positive definite on sampled points of the unit circle, then
//! runs the fixed-point iteration `X ↦ (A1 - A2·X·A2ᴴ)⁻¹`. Every failure
//! maps to a distinct nonzero exit status in [`workload_main`]:
//!
//! | status | meaning |
//! |-------:|---------|
//! | 0 | precondition holds on the samples and the iteration converged |
//! | 1 | runtime failure (singular matrix, unwritable output) |
//! | 2 | usage or input error |
//! | 3 | convergence precondition violated (no solve attempted) |
//! | 4 | `max_iter` reached without convergence |

mod entry;
mod generate;
mod hpd;
mod matrix;
mod solve;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use entry::{
    workload_main, EXIT_NONCONVERGENCE, EXIT_OK, EXIT_PRECONDITION, EXIT_RUNTIME, EXIT_USAGE,
    METRICS_FILE,
};
pub use generate::{generate_inputs, GenerateMode, Xorshift64Star};
pub use hpd::{
    check_convergence_precondition, cholesky_hpd, symbol_at, unit_root, HpdError,
    PreconditionVerdict, DEFAULT_HERMITIAN_TOL, DEFAULT_THETA_SAMPLES,
};
pub use matrix::{build_a, ComplexMatrix, SingularMatrix};
pub use solve::{
    fixed_point_defect, fixed_point_map, fixed_point_solve, WorkloadResult, DEFAULT_MAX_ITER,
    DEFAULT_TOL,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("dimension mismatch between {what}: {left} vs {right}")]
    DimensionMismatch {
        what: String,
        left: usize,
        right: usize,
    },
    #[error("singular matrix at iteration {iteration} (pivot {pivot_index} = {pivot:.3e})")]
    Singular {
        iteration: usize,
        pivot_index: usize,
        pivot: f64,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

mod complex_pair {
    use super::*;

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}
fn default_samples() -> usize {
    DEFAULT_THETA_SAMPLES
}

/// Workload input document. Complex numbers are `[re, im]` pairs and
/// matrices are row-major arrays of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadInput {
    #[serde(rename = "S1")]
    pub s1: ComplexMatrix,
    #[serde(rename = "H1")]
    pub h1: ComplexMatrix,
    #[serde(rename = "S2")]
    pub s2: ComplexMatrix,
    #[serde(rename = "H2")]
    pub h2: ComplexMatrix,
    #[serde(default = "zero", with = "complex_pair")]
    pub alpha1: Complex64,
    #[serde(default = "zero", with = "complex_pair")]
    pub alpha2: Complex64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_samples")]
    pub hpd_samples: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl WorkloadInput {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let n = self.s1.n();
        for (name, m) in [("H1", &self.h1), ("S2", &self.s2), ("H2", &self.h2)] {
            if m.n() != n {
                return Err(WorkloadError::DimensionMismatch {
                    what: format!("S1 and {name}"),
                    left: n,
                    right: m.n(),
                });
            }
        }
        if !(self.alpha1.is_finite() && self.alpha2.is_finite()) {
            return Err(WorkloadError::InvalidInput("alpha must be finite".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(WorkloadError::InvalidInput(format!("tol {} must be > 0", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(WorkloadError::InvalidInput("max_iter must be >= 1".into()));
        }
        if self.hpd_samples == 0 {
            return Err(WorkloadError::InvalidInput("hpd_samples must be >= 1".into()));
        }
        Ok(())
    }
}
