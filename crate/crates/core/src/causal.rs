//! Causal Monarch convolution over the complex roots of unity.
//!
//! Both inputs are zero-padded at the end to `N = s²`, mapped through a
//! Monarch `M` whose basis polynomials are degree-restricted, multiplied
//! pointwise, and mapped back by `M⁻¹`. The restrictions (the masks checked by
//! [`MaskedCoefficients`]) make column `j` of `M` the evaluations of a
//! polynomial `q_j` with minimum degree `j`, and keep the columns used by the
//! inputs at degree `≤ N/2 − 1`, so the product never wraps around and output
//! `i` only sees inputs `0..=i`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::field::{exact_sqrt, hadamard, DenseMatrix, Field, OpCounter};
use crate::monarch::{coeffs_to_factors, CoefficientMatrices, MonarchFactorization};
use crate::multivar::ConvOutput;

/// `(N, √N)` for input length `n`: `s = ⌈√(2n)⌉`, raised to `s + 1` when `s`
/// is odd and the `s·⌊s/2⌋` low-degree columns cannot hold `n` inputs.
pub fn causal_padded_size(n: usize) -> Result<(usize, usize)> {
    if n == 0 {
        return Err(invalid("input length must be positive"));
    }
    let mut s = ((2 * n) as f64).sqrt().ceil() as usize;
    while s * s < 2 * n {
        s += 1;
    }
    while s > 1 && (s - 1) * (s - 1) >= 2 * n {
        s -= 1;
    }
    if s * (s / 2) < n {
        s += 1;
    }
    Ok((s * s, s))
}

/// Coefficients with the causal zero pattern.
///
/// With `h = ⌊√N/2⌋`:
/// * `L̃[a, c] = 0` when `a ≥ √N` or `a < c`, and `L̃[c, c] ≠ 0`;
/// * in every block `R̃_k`, `[a, c] = 0` when `a < c`, or when `a ≥ h` and
///   `c < h`; and `R̃_k[c, c] ≠ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedCoefficients {
    c: CoefficientMatrices<Complex64>,
}

fn mask_err(matrix: &'static str, row: usize, col: usize, reason: &'static str) -> Error {
    Error::MaskViolation {
        matrix,
        row,
        col,
        reason,
    }
}

impl MaskedCoefficients {
    pub fn new(l: DenseMatrix<Complex64>, r: DenseMatrix<Complex64>) -> Result<Self> {
        let c = CoefficientMatrices::new(l, r)?;
        let s = c.sqrt_n();
        let h = s / 2;
        for a in 0..c.n() {
            for col in 0..s {
                let x = c.l().get(a, col);
                if a == col && x == Complex64::new(0.0, 0.0) {
                    return Err(mask_err("L̃", a, col, "zero diagonal entry"));
                }
                if x != Complex64::new(0.0, 0.0) && (a >= s || a < col) {
                    return Err(mask_err("L̃", a, col, "entry outside the causal pattern"));
                }
                let (k, d) = (a / s, a % s);
                let y = c.r_block_entry(k, d, col);
                if d == col && y == Complex64::new(0.0, 0.0) {
                    return Err(mask_err("R̃", a, col, "zero diagonal entry"));
                }
                if y != Complex64::new(0.0, 0.0) && (d < col || (d >= h && col < h)) {
                    return Err(mask_err("R̃", a, col, "entry outside the causal pattern"));
                }
            }
        }
        Ok(Self { c })
    }

    pub fn coefficients(&self) -> &CoefficientMatrices<Complex64> {
        &self.c
    }

    pub fn n(&self) -> usize {
        self.c.n()
    }

    /// `L̃` top block and `R̃` blocks equal to the identity, so `q_j(Z) = Z^j`
    /// and the operator is the plain truncated linear convolution.
    pub fn monomial(n: usize) -> Result<Self> {
        let c = CoefficientMatrices::identity(n)?;
        Self::new(c.l().clone(), c.r().clone())
    }

    /// Fraction of `R̃` entries forced to zero by the pattern:
    /// `[s(s−1)/2 + h(s−h)] / s²`.
    pub fn r_zero_fraction(s: usize) -> f64 {
        let h = s / 2;
        (s * (s - 1) / 2 + h * (s - h)) as f64 / (s * s) as f64
    }
}

/// Whether `(a, c)` of an `R̃` block may be nonzero.
fn r_allowed(a: usize, c: usize, h: usize) -> bool {
    a >= c && !(a >= h && c < h)
}

/// Seeded coefficients for input length `n` (padded per
/// [`causal_padded_size`]): free entries uniform on the unit disk, diagonals
/// `1 + |draw|`.
pub fn mask_random_coefficients(n: usize, seed: u64) -> Result<MaskedCoefficients> {
    let (big_n, s) = causal_padded_size(n)?;
    let h = s / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |diag: bool| {
        let z = Complex64::sample(&mut rng);
        if diag {
            Complex64::new(1.0 + z.norm(), 0.0)
        } else {
            z
        }
    };
    let l = DenseMatrix::from_fn(big_n, s, |a, c| {
        if a < s && a >= c {
            draw(a == c)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let r = DenseMatrix::from_fn(big_n, s, |a, c| {
        let d = a % s;
        if r_allowed(d, c, h) {
            draw(d == c)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    MaskedCoefficients::new(l, r)
}

/// Dense coefficients with no zero pattern (diagonally boosted so the
/// operator stays invertible). Used as a negative control: the resulting
/// convolution is not causal.
pub fn unmasked_random_coefficients(n: usize, seed: u64) -> Result<CoefficientMatrices<Complex64>> {
    let (big_n, s) = causal_padded_size(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = DenseMatrix::from_fn(big_n, s, |a, c| {
        Complex64::sample(&mut rng) + if a == c { 2.0 } else { 0.0 }
    });
    let r = DenseMatrix::from_fn(big_n, s, |a, c| {
        Complex64::sample(&mut rng) + if a % s == c { 2.0 } else { 0.0 }
    });
    CoefficientMatrices::new(l, r)
}

/// Causal convolution operator for signals of length `n`.
#[derive(Debug, Clone)]
pub struct CausalMonarchOperator {
    n: usize,
    m: MonarchFactorization<Complex64>,
    inv: MonarchFactorization<Complex64>,
}

impl CausalMonarchOperator {
    /// Builds from masked coefficients whose size matches `n`.
    pub fn new(n: usize, c: &MaskedCoefficients) -> Result<Self> {
        let (big_n, _) = causal_padded_size(n)?;
        if c.n() != big_n {
            return Err(invalid(format!(
                "coefficients are for N = {}, input length {n} needs N = {big_n}",
                c.n()
            )));
        }
        Self::from_factorization(n, coeffs_to_factors(c.coefficients())?)
    }

    /// Wraps an arbitrary factorization without any causality checks (used
    /// for negative controls and padding experiments).
    pub fn from_factorization(n: usize, m: MonarchFactorization<Complex64>) -> Result<Self> {
        if n == 0 || n > m.n() {
            return Err(invalid(format!("input length {n} does not fit N = {}", m.n())));
        }
        let inv = m.inverse()?;
        Ok(Self { n, m, inv })
    }

    /// Input length.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Padded size.
    pub fn padded_n(&self) -> usize {
        self.m.n()
    }

    pub fn monarch(&self) -> &MonarchFactorization<Complex64> {
        &self.m
    }

    pub fn inverse_monarch(&self) -> &MonarchFactorization<Complex64> {
        &self.inv
    }

    fn pad(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut v = x.to_vec();
        v.resize(self.m.n(), Complex64::new(0.0, 0.0));
        v
    }

    /// `M⁻¹((M·k′)⊙(M·u′))`, truncated to `n` entries or in full.
    pub fn conv_counted(
        &self,
        k: &[Complex64],
        u: &[Complex64],
        output: ConvOutput,
        counter: Option<&OpCounter>,
    ) -> Result<Vec<Complex64>> {
        if k.len() != self.n || u.len() != self.n {
            return Err(invalid(format!(
                "causal conv expects length {}, got k: {}, u: {}",
                self.n,
                k.len(),
                u.len()
            )));
        }
        let mk = self.m.matvec_counted(&self.pad(k), counter)?;
        let mu = self.m.matvec_counted(&self.pad(u), counter)?;
        let mut f = self.inv.matvec_counted(&hadamard(&mk, &mu, counter)?, counter)?;
        if output == ConvOutput::Truncated {
            f.truncate(self.n);
        }
        Ok(f)
    }

    pub fn conv(&self, k: &[Complex64], u: &[Complex64]) -> Result<Vec<Complex64>> {
        self.conv_counted(k, u, ConvOutput::Truncated, None)
    }

    /// One kernel against many inputs, parallel over the batch.
    pub fn conv_batch(&self, k: &[Complex64], us: &[Vec<Complex64>]) -> Result<Vec<Vec<Complex64>>> {
        us.par_iter().map(|u| self.conv(k, u)).collect()
    }
}

pub fn build_causal_operator(n: usize, c: &MaskedCoefficients) -> Result<CausalMonarchOperator> {
    CausalMonarchOperator::new(n, c)
}

pub fn causal_conv(op: &CausalMonarchOperator, k: &[Complex64], u: &[Complex64]) -> Result<Vec<Complex64>> {
    op.conv(k, u)
}

/// Result of a finite-difference causality sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalityReport {
    /// Largest `|Δout[i]|/δ` over all trials with `i < j`.
    pub max_leakage: f64,
    /// `(trial, perturbed input j, output i)` with leakage above tolerance.
    pub violations: Vec<(usize, usize, usize)>,
    pub trials: usize,
}

impl CausalityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Perturbation step used by the causality checks.
pub const PERTURBATION: f64 = 1e-3;
/// Leakage above this fails the causality check.
pub const LEAKAGE_TOLERANCE: f64 = 1e-9;

/// Finite-difference causality check: for each trial draws a random `u`, and
/// for every `j` perturbs `u[j]` by `δ`, requiring outputs `0..j` to move by
/// less than the tolerance (relative to `δ`).
pub fn causality_jacobian_check(
    op: &CausalMonarchOperator,
    k: &[Complex64],
    trials: usize,
    seed: u64,
) -> Result<CausalityReport> {
    let n = op.n();
    let results: Vec<(f64, Vec<(usize, usize, usize)>)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let u: Vec<Complex64> = (0..n).map(|_| Complex64::sample(&mut rng)).collect();
            let base = op.conv(k, &u)?;
            let mut worst = 0.0f64;
            let mut bad = Vec::new();
            for j in 0..n {
                let mut up = u.clone();
                up[j] += PERTURBATION;
                let out = op.conv(k, &up)?;
                for i in 0..j {
                    let leak = (out[i] - base[i]).norm() / PERTURBATION;
                    worst = worst.max(leak);
                    if leak >= LEAKAGE_TOLERANCE {
                        bad.push((t, j, i));
                    }
                }
            }
            Ok((worst, bad))
        })
        .collect::<Result<_>>()?;
    let mut report = CausalityReport {
        max_leakage: 0.0,
        violations: Vec::new(),
        trials,
    };
    for (worst, bad) in results {
        report.max_leakage = report.max_leakage.max(worst);
        report.violations.extend(bad);
    }
    Ok(report)
}

/// Draws a random complex signal of length `n` (test and CLI helper).
pub fn random_signal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::sample(rng)).collect()
}

/// Lifts a real signal into the complex pipeline.
pub fn complexify(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

/// `true` when `n` is a perfect square (helper for size validation).
pub fn is_square(n: usize) -> bool {
    exact_sqrt(n).is_some()
}
