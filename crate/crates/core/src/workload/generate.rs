use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use super::{ComplexMatrix, WorkloadInput, DEFAULT_MAX_ITER, DEFAULT_THETA_SAMPLES, DEFAULT_TOL};

/// xorshift64* (Vigna): shifts 12, 25, 27 and multiplier
/// `0x2545F4914F6CDD1D`. The seed is scrambled through one SplitMix64 step
/// (`0x9E3779B97F4A7C15`, `0xBF58476D1CE4E5B9`, `0x94D049BB133111EB`) so that
/// seed 0 is usable.
#[derive(Debug, Clone)]
pub struct Xorshift64Star {
    state: u64,
}

impl Xorshift64Star {
    pub fn new(seed: u64) -> Self {
        let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        Self {
            state: if z == 0 { 0x9E37_79B9_7F4A_7C15 } else { z },
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[-1, 1)` from the top 53 bits.
    pub fn next_signed_unit(&mut self) -> f64 {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        2.0 * u - 1.0
    }

    /// Real part first, then imaginary part.
    pub fn next_complex(&mut self) -> Complex64 {
        let re = self.next_signed_unit();
        let im = self.next_signed_unit();
        Complex64::new(re, im)
    }

    fn matrix(&mut self, n: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(n, |_, _| self.next_complex())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenerateMode {
    /// Every entry of S1, H1, S2, H2 drawn i.i.d.
    Random,
    /// S1 Hermitian with `λ_min(S1) > 2‖S2‖_F`, so the precondition holds on
    /// the whole unit circle; H1 = S1 and H2 = S2.
    GuaranteedConvergent,
}

impl FromStr for GenerateMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(GenerateMode::Random),
            "guaranteed-convergent" => Ok(GenerateMode::GuaranteedConvergent),
            other => Err(format!(
                "unknown mode `{other}` (expected random or guaranteed-convergent)"
            )),
        }
    }
}

impl fmt::Display for GenerateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GenerateMode::Random => "random",
            GenerateMode::GuaranteedConvergent => "guaranteed-convergent",
        })
    }
}

/// Frobenius norm of the coupling matrix S2 in guaranteed-convergent mode.
const COUPLING_NORM: f64 = 0.25;

/// Deterministic workload inputs for `(seed, n, mode)`.
pub fn generate_inputs(seed: u64, n: usize, mode: GenerateMode) -> WorkloadInput {
    assert!(n >= 1, "n must be >= 1");
    let mut rng = Xorshift64Star::new(seed);
    let (s1, h1, s2, h2) = match mode {
        GenerateMode::Random => {
            let s1 = rng.matrix(n);
            let h1 = rng.matrix(n);
            let s2 = rng.matrix(n);
            let h2 = rng.matrix(n);
            (s1, h1, s2, h2)
        }
        GenerateMode::GuaranteedConvergent => {
            let b = rng.matrix(n).scale(Complex64::new(0.5, 0.0));
            let raw = rng.matrix(n);
            let s2 = raw.scale(Complex64::new(COUPLING_NORM / raw.frobenius_norm(), 0.0));
            // λ_min(B + Bᴴ) >= -2‖B‖_F, so this shift leaves λ_min(S1) >= 2‖S2‖_F + 1.
            let shift = 2.0 * b.frobenius_norm() + 2.0 * s2.frobenius_norm() + 1.0;
            let s1 = &(&b + &b.conj_transpose()) + &ComplexMatrix::identity(n).scale(Complex64::new(shift, 0.0));
            (s1.clone(), s1, s2.clone(), s2)
        }
    };
    WorkloadInput {
        s1,
        h1,
        s2,
        h2,
        alpha1: Complex64::new(0.0, 0.0),
        alpha2: Complex64::new(0.0, 0.0),
        tol: DEFAULT_TOL,
        max_iter: DEFAULT_MAX_ITER,
        hpd_samples: DEFAULT_THETA_SAMPLES,
        seed: Some(seed),
    }
}
