//! Causal convolution over the reals with Chebyshev bases.
//!
//! Nodes are `ω_{N,i} = cos(π(i + ½)/N)` and the transform is
//! `C_N[i,j] = T_j(ω_{N,i})`. An SC operator is built by the BlockSC
//! algorithm into `M = P·L·P·R·P`; the causal matrix `M'` differs from `M`
//! only by signs, `M'[i,j] = (−1)^{i1(√N − j1 − 1)}·M[i,j]`, and is applied
//! with two matvecs of `M` (parity split).
//!
//! Every value in this module is `f64`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::field::{exact_sqrt, hadamard, DenseMatrix, Lu};
use crate::monarch::{assemble_blocky, MonarchFactorization};

/// Dense Chebyshev transform (desk-scale sizes).
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevTransform {
    n: usize,
    c: DenseMatrix<f64>,
}

/// `cos(π(i + ½)/n)`.
pub fn chebyshev_node(n: usize, i: usize) -> f64 {
    (PI * (i as f64 + 0.5) / n as f64).cos()
}

impl ChebyshevTransform {
    pub fn new(n: usize) -> Self {
        // T_j(cos θ) = cos(jθ) with θ_i = π(i + ½)/n.
        let c = DenseMatrix::from_fn(n, n, |i, j| {
            (PI * (i as f64 + 0.5) * j as f64 / n as f64).cos()
        });
        Self { n, c }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DenseMatrix<f64> {
        &self.c
    }

    /// Evaluations at the nodes of `Σ_a x[a]·T_a`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.c.matvec(x)
    }

    /// `C_N⁻¹·y = diag(1/N, 2/N, …, 2/N)·C_Nᵀ·y`, from `C_Nᵀ·C_N = diag(N, N/2, …)`.
    pub fn inverse_matvec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n {
            return Err(invalid("Chebyshev inverse: length mismatch"));
        }
        let n = self.n as f64;
        Ok((0..self.n)
            .map(|j| {
                let dot: f64 = (0..self.n).map(|i| self.c.get(i, j) * y[i]).sum();
                dot * if j == 0 { 1.0 / n } else { 2.0 / n }
            })
            .collect())
    }

    /// `(C̄_N, S̄_N)` with `C_N = C̄_N − S̄_N`, splitting column `j = j1·√N + j0`
    /// into its `j1/√N` and `j0/N` angle parts.
    pub fn cos_sin_split(&self) -> Result<(DenseMatrix<f64>, DenseMatrix<f64>)> {
        let s = exact_sqrt(self.n).ok_or_else(|| invalid("split needs a perfect-square N"))?;
        let n = self.n as f64;
        let angle = |i: usize, j: usize| {
            let t = PI * (i as f64 + 0.5);
            (t * (j / s) as f64 / s as f64, t * (j % s) as f64 / n)
        };
        let cbar = DenseMatrix::from_fn(self.n, self.n, |i, j| {
            let (a, b) = angle(i, j);
            a.cos() * b.cos()
        });
        let sbar = DenseMatrix::from_fn(self.n, self.n, |i, j| {
            let (a, b) = angle(i, j);
            a.sin() * b.sin()
        });
        Ok((cbar, sbar))
    }
}

pub fn chebyshev_transform_build(n: usize) -> ChebyshevTransform {
    ChebyshevTransform::new(n)
}

pub fn chebyshev_inverse_matvec(c: &ChebyshevTransform, y: &[f64]) -> Result<Vec<f64>> {
    c.inverse_matvec(y)
}

/// Interleaves two half signals by `√N`-block parity: even-numbered blocks
/// are filled in order from `u0`, odd-numbered blocks from `u1`.
pub fn mix(u0: &[f64], u1: &[f64], s: usize) -> Result<Vec<f64>> {
    let (even, odd) = (s.div_ceil(2) * s, (s / 2) * s);
    if u0.len() != even || u1.len() != odd {
        return Err(invalid(format!(
            "mix expects halves of {even} and {odd} entries, got {} and {}",
            u0.len(),
            u1.len()
        )));
    }
    let mut out = Vec::with_capacity(s * s);
    for blk in 0..s {
        let src = if blk % 2 == 0 { u0 } else { u1 };
        let k = blk / 2;
        out.extend_from_slice(&src[k * s..(k + 1) * s]);
    }
    Ok(out)
}

/// Inverse of [`mix`].
pub fn unmix(u: &[f64], s: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if u.len() != s * s {
        return Err(invalid("unmix: length is not √N·√N"));
    }
    let (mut u0, mut u1) = (Vec::new(), Vec::new());
    for (blk, chunk) in u.chunks(s).enumerate() {
        if blk % 2 == 0 { &mut u0 } else { &mut u1 }.extend_from_slice(chunk);
    }
    Ok((u0, u1))
}

/// Structured causal operator built by BlockSC.
///
/// Coefficient layout (both `N×√N`): column `j0` of `L̃` holds
/// `ℓ_{√N−j0−1}` (degree `≤ √N − j0 − 1`); column `j1` of block `R̃_{j0}`
/// holds `r̃_{√N−j0−1, √N−j1−1}` (degree `≤ √N − j1 − 1`, same parity as its
/// degree bound). Column `j` of `M'` is then a polynomial of degree
/// `N − j − 1` evaluated at the Chebyshev nodes.
#[derive(Debug)]
pub struct ScOperator {
    s: usize,
    l: DenseMatrix<f64>,
    r: DenseMatrix<f64>,
    m: MonarchFactorization<f64>,
    inv: OnceLock<Result<Lu<f64>>>,
}

impl ScOperator {
    pub fn n(&self) -> usize {
        self.s * self.s
    }

    pub fn sqrt_n(&self) -> usize {
        self.s
    }

    pub fn l(&self) -> &DenseMatrix<f64> {
        &self.l
    }

    pub fn r(&self) -> &DenseMatrix<f64> {
        &self.r
    }

    /// The BlockSC factorization `M` (not yet sign-corrected).
    pub fn monarch(&self) -> &MonarchFactorization<f64> {
        &self.m
    }

    /// `(−1)^{i1(√N − 1)}`.
    pub fn sign_diagonal(&self) -> Vec<f64> {
        let s = self.s;
        (0..self.n())
            .map(|i| if (i / s) * (s - 1) % 2 == 0 { 1.0 } else { -1.0 })
            .collect()
    }

    /// `M'·u` from the two matvecs `M·Mix(u0, 0)` and `M·Mix(0, u1)`.
    pub fn matvec_prime(&self, u: &[f64]) -> Result<Vec<f64>> {
        let s = self.s;
        let (u0, u1) = unmix(u, s)?;
        let a = self.m.matvec(&mix(&u0, &vec![0.0; u1.len()], s)?)?;
        let b = self.m.matvec(&mix(&vec![0.0; u0.len()], &u1, s)?)?;
        let d = self.sign_diagonal();
        Ok((0..self.n())
            .map(|i| {
                let z = if (i / s) % 2 == 0 { a[i] + b[i] } else { a[i] - b[i] };
                d[i] * z
            })
            .collect())
    }

    /// Dense `M'` (tests and the desk-scale inverse).
    pub fn materialize_prime(&self) -> Result<DenseMatrix<f64>> {
        let m = self.m.materialize()?;
        let s = self.s;
        Ok(DenseMatrix::from_fn(self.n(), self.n(), |i, j| {
            let e = (i / s) * (s - (j / s) - 1);
            if e % 2 == 0 {
                m.get(i, j)
            } else {
                -m.get(i, j)
            }
        }))
    }

    /// `M'⁻¹·y` by LU of the materialized `M'`, factored once and cached.
    /// Test-scale only: `N ≤ 4096`.
    pub fn inverse_matvec_prime(&self, y: &[f64]) -> Result<Vec<f64>> {
        let lu = self
            .inv
            .get_or_init(|| self.materialize_prime().and_then(|m| Lu::factor(&m)));
        match lu {
            Ok(lu) => lu.solve(y),
            Err(e) => Err(e.clone()),
        }
    }
}

fn check_sc_pattern(l: &DenseMatrix<f64>, r: &DenseMatrix<f64>, s: usize) -> Result<()> {
    for a in 0..s * s {
        for c in 0..s {
            if l.get(a, c) != 0.0 && a > s - c - 1 {
                return Err(Error::MaskViolation {
                    matrix: "L̃",
                    row: a,
                    col: c,
                    reason: "degree exceeds √N − j0 − 1",
                });
            }
            let (k, deg) = (a / s, a % s);
            let bound = s - c - 1;
            if r.get(a, c) != 0.0 {
                if deg > bound {
                    return Err(Error::MaskViolation {
                        matrix: "R̃",
                        row: k * s + deg,
                        col: c,
                        reason: "degree exceeds √N − j1 − 1",
                    });
                }
                if (bound - deg) % 2 == 1 {
                    return Err(Error::MaskViolation {
                        matrix: "R̃",
                        row: k * s + deg,
                        col: c,
                        reason: "coefficient parity differs from degree parity",
                    });
                }
            }
        }
    }
    Ok(())
}

/// BlockSC: `L' = P·C_N·L̃` cut into diagonal blocks, `R` blocks `C_{√N}·R̃_k`.
pub fn block_sc_build(l: DenseMatrix<f64>, r: DenseMatrix<f64>) -> Result<ScOperator> {
    let s = l.cols();
    let n = s * s;
    if s == 0 || l.rows() != n || r.rows() != n || r.cols() != s {
        return Err(invalid("SC coefficients must both be N×√N"));
    }
    check_sc_pattern(&l, &r, s)?;
    let cn = ChebyshevTransform::new(n);
    let transformed = (0..s)
        .map(|c| cn.matvec(&l.column(c)))
        .collect::<Result<Vec<_>>>()?;
    let m = assemble_blocky(&transformed, &r, ChebyshevTransform::new(s).matrix())?;
    Ok(ScOperator {
        s,
        l,
        r,
        m,
        inv: OnceLock::new(),
    })
}

pub fn sc_matvec_via_parity_split(op: &ScOperator, u: &[f64]) -> Result<Vec<f64>> {
    op.matvec_prime(u)
}

/// Deterministic coefficients obeying the SC pattern, with leading
/// coefficients `1 + |draw|` so that `M'` is invertible.
pub fn sc_random_coefficients(n: usize, seed: u64) -> Result<(DenseMatrix<f64>, DenseMatrix<f64>)> {
    let s = exact_sqrt(n).ok_or_else(|| invalid(format!("N = {n} is not a perfect square")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |lead: bool| {
        let x: f64 = rng.gen_range(-1.0..=1.0);
        if lead {
            1.0 + x.abs()
        } else {
            x
        }
    };
    let l = DenseMatrix::from_fn(n, s, |a, c| {
        let bound = s - c - 1;
        if a > bound {
            0.0
        } else {
            draw(a == bound)
        }
    });
    let r = DenseMatrix::from_fn(n, s, |a, c| {
        let (deg, bound) = (a % s, s - c - 1);
        if deg > bound || (bound - deg) % 2 == 1 {
            0.0
        } else {
            draw(deg == bound)
        }
    });
    Ok((l, r))
}

/// Output selection for the real causal convolution.
pub use crate::multivar::ConvOutput;

/// `M'⁻¹((M'·k')⊙(M'·u'))` with both inputs front-padded by `⌈N/2⌉` zeros.
pub fn real_causal_conv_with(
    op: &ScOperator,
    k: &[f64],
    u: &[f64],
    output: ConvOutput,
) -> Result<Vec<f64>> {
    let (n_in, n) = (u.len(), op.n());
    if k.len() != n_in {
        return Err(invalid("kernel and input lengths differ"));
    }
    if n_in > n / 2 {
        return Err(invalid(format!("input length {n_in} exceeds ⌊N/2⌋ = {}", n / 2)));
    }
    let pad = |x: &[f64]| {
        let mut v = vec![0.0; n];
        let c = n.div_ceil(2);
        v[c..c + x.len()].copy_from_slice(x);
        v
    };
    let mk = op.matvec_prime(&pad(k))?;
    let mu = op.matvec_prime(&pad(u))?;
    let mut f = op.inverse_matvec_prime(&hadamard(&mk, &mu, None)?)?;
    if output == ConvOutput::Truncated {
        f.truncate(n_in);
    }
    Ok(f)
}

pub fn real_causal_conv(op: &ScOperator, k: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    real_causal_conv_with(op, k, u, ConvOutput::Truncated)
}

/// Narrows a complex signal to the reals; any nonzero imaginary part is an
/// invalid argument for the real pipeline.
pub fn real_signal(v: &[num_complex::Complex64]) -> Result<Vec<f64>> {
    v.iter()
        .enumerate()
        .map(|(i, z)| {
            if z.im == 0.0 {
                Ok(z.re)
            } else {
                Err(invalid(format!("entry {i} has a nonzero imaginary part")))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::max_abs_diff;
    use crate::oracle::chebyshev_t;

    #[test]
    fn transform_n2() {
        let c = ChebyshevTransform::new(2);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expect = DenseMatrix::from_vec(2, 2, vec![1.0, h, 1.0, -h]).unwrap();
        assert!(c.matrix().max_abs_diff(&expect) < 1e-15);
        assert!(max_abs_diff(&c.inverse_matvec(&[1.0, 1.0]).unwrap(), &[1.0, 0.0]) < 1e-15);
    }

    #[test]
    fn transform_orthogonality() {
        for n in [4, 16, 64] {
            let c = ChebyshevTransform::new(n);
            assert!(c.matrix().column(0).iter().all(|&x| (x - 1.0).abs() < 1e-15));
            let g = c.matrix().transpose().matmul(c.matrix()).unwrap();
            let d = DenseMatrix::from_fn(n, n, |i, j| match (i == j, i) {
                (false, _) => 0.0,
                (true, 0) => n as f64,
                _ => n as f64 / 2.0,
            });
            assert!(g.max_abs_diff(&d) <= 1e-9, "N={n}");
        }
    }

    #[test]
    fn inverse_round_trip() {
        for n in [2, 4, 16, 64] {
            let c = ChebyshevTransform::new(n);
            let y: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) as f64).sin()).collect();
            let back = c.matvec(&c.inverse_matvec(&y).unwrap()).unwrap();
            assert!(max_abs_diff(&back, &y) <= 1e-9);
            let e0 = c.inverse_matvec(&c.matrix().column(0)).unwrap();
            assert!(max_abs_diff(&e0, &crate::field::unit_vector(n, 0)) < 1e-12);
        }
    }

    #[test]
    fn cos_sin_split_reconstructs() {
        let c = ChebyshevTransform::new(16);
        let (cb, sb) = c.cos_sin_split().unwrap();
        let diff = DenseMatrix::from_fn(16, 16, |i, j| cb.get(i, j) - sb.get(i, j));
        assert!(diff.max_abs_diff(c.matrix()) <= 1e-12);
        // The (−1)^{i1·j1} factorization of each half.
        for i in 0..16 {
            for j in 0..16 {
                let (i1, i0, j1, j0) = (i / 4, i % 4, j / 4, j % 4);
                let sign = if (i1 * j1) % 2 == 0 { 1.0 } else { -1.0 };
                let t = PI * (i0 as f64 + 0.5) * j1 as f64 / 4.0;
                let u = PI * (i as f64 + 0.5) * j0 as f64 / 16.0;
                assert!((cb.get(i, j) - sign * t.cos() * u.cos()).abs() < 1e-12);
                assert!((sb.get(i, j) - sign * t.sin() * u.sin()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sqrt_node_identity() {
        for i in 0..16 {
            let lhs = chebyshev_t(4, chebyshev_node(16, i));
            let sign = if (i / 4) % 2 == 0 { 1.0 } else { -1.0 };
            assert!((lhs - sign * chebyshev_node(4, i % 4)).abs() < 1e-12);
        }
    }

    #[test]
    fn mix_layout() {
        let u0 = [1.0, 2.0];
        let u1 = [5.0, 6.0];
        assert_eq!(mix(&u0, &u1, 2).unwrap(), vec![1.0, 2.0, 5.0, 6.0]);
        let u: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let (a, b) = unmix(&u, 3).unwrap();
        assert_eq!(a, vec![0.0, 1.0, 2.0, 6.0, 7.0, 8.0]);
        assert_eq!(b, vec![3.0, 4.0, 5.0]);
        assert_eq!(mix(&a, &b, 3).unwrap(), u);
        assert!(mix(&a, &a, 3).is_err());
    }

    #[test]
    fn pattern_violations_rejected() {
        let (l, r) = sc_random_coefficients(16, 1).unwrap();
        assert!(block_sc_build(l.clone(), r.clone()).is_ok());
        let mut bad = r.clone();
        bad.set(4 + 2, 0, 1.0); // block 1, degree 2, column 0: bound 3, odd gap
        assert!(matches!(block_sc_build(l.clone(), bad), Err(Error::MaskViolation { .. })));
        let mut bad = l.clone();
        bad.set(3, 1, 1.0); // ℓ for column 1 has degree ≤ 2
        assert!(matches!(block_sc_build(bad, r), Err(Error::MaskViolation { .. })));
    }

    #[test]
    fn real_signal_rejects_complex() {
        use num_complex::Complex64;
        assert_eq!(real_signal(&[Complex64::new(2.0, 0.0)]).unwrap(), vec![2.0]);
        assert!(real_signal(&[Complex64::new(2.0, 1e-3)]).is_err());
    }

    #[test]
    fn zero_kernel_and_odd_root_sign() {
        let (l, r) = sc_random_coefficients(9, 4).unwrap();
        let op = block_sc_build(l, r).unwrap();
        assert!(op.sign_diagonal().iter().all(|&d| d == 1.0));
        let out = real_causal_conv(&op, &[0.0; 4], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(out.iter().all(|&x| x.abs() < 1e-12));
        assert!(real_causal_conv(&op, &[0.0; 5], &[0.0; 5]).is_err());
    }
}
