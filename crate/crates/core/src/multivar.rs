//! p-variate Monarch matrices over Chebyshev nodes and their causal
//! convolution.
//!
//! Multi-indices `(j_0, …, j_{p−1})` flatten big-endian: `j = Σ j_a·b^{p−1−a}`,
//! so `j_0` is the most significant digit and flat order equals lexicographic
//! order. With this flattening the sub-index reversal sits at the input end
//! of the chain:
//!
//! `M' = B_{p−1}·Q_{p−1} ⋯ Q_1·B_0·P^R`, `Q_a = P_{b, b^{p−a+1}, N}`.
//!
//! Entering factor `B_a` the working vector is laid out as
//! `(i_0, …, i_{a−1}, j_{p−1}, …, j_{a+1}, j_a)`; the leading `p − 1` digits
//! pick the block, `j_a` the column, and the block writes `i_a` in its place.
//! Entry `[i, j]` of `M'` is therefore `∏_a ℓ^{(a)}(ω_{b,i_a})` where factor
//! `a` uses the block indexed by `(i_0..i_{a−1}, j_{p−1}..j_{a+1})`.

use crate::error::{invalid, Error, Result};
use crate::field::{exact_root, hadamard, BlockDiagonalMatrix, DenseMatrix, IndexPermutation, OpCounter};
use crate::monarch::{MonarchFactorization, Recipe};
use crate::real_causal::ChebyshevTransform;

/// Multi-index with lexicographic ordering (derived `Ord` on the digit list).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn unflatten(mut j: usize, radix: usize, p: usize) -> Self {
        let mut digits = vec![0; p];
        for d in digits.iter_mut().rev() {
            *d = j % radix;
            j /= radix;
        }
        Self(digits)
    }

    pub fn flatten(&self, radix: usize) -> usize {
        self.0.iter().fold(0, |acc, &d| acc * radix + d)
    }

    pub fn digits(&self) -> &[usize] {
        &self.0
    }

    /// Componentwise `self ≤ other`.
    pub fn dominated_by(&self, other: &Self) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }
}

/// Maps `(i_{p−1}, …, i_0)` to `(i_0, …, i_{p−1})`; bit reversal when `b = 2`.
pub fn subindex_reversal(b: usize, p: usize) -> Result<IndexPermutation> {
    if b == 0 {
        return Err(invalid("radix must be positive"));
    }
    let n = b.checked_pow(p as u32).ok_or_else(|| invalid("b^p overflows"))?;
    IndexPermutation::new(
        (0..n)
            .map(|i| {
                let mut d = MultiIndex::unflatten(i, b, p).0;
                d.reverse();
                MultiIndex(d).flatten(b)
            })
            .collect(),
    )
}

/// The same permutation as the matrix product `∏_{a=0}^{p−2} P_{b^{p−a−1}, b^{p−a}, b^p}`
/// (rightmost factor acts first, so `a = p − 2` is applied first).
pub fn subindex_reversal_composed(b: usize, p: usize) -> Result<IndexPermutation> {
    let n = b.pow(p as u32);
    let mut acc = IndexPermutation::identity(n);
    for a in (0..p.saturating_sub(1)).rev() {
        let step = IndexPermutation::block_sigma(b.pow((p - a - 1) as u32), b.pow((p - a) as u32), n)?;
        acc = acc.then(&step)?;
    }
    Ok(acc)
}

/// Order-p Monarch over the Chebyshev nodes `ω_{b,i}`, built from per-factor
/// coefficient matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivarMonarch {
    b: usize,
    p: usize,
    coeffs: Vec<DenseMatrix<f64>>,
    m: MonarchFactorization<f64>,
}

impl MultivarMonarch {
    /// Blocky MultiVar: block `k` of factor `a` is `C_b · B̃_(a)[k·b .. (k+1)·b, :]`.
    pub fn build(coeffs: Vec<DenseMatrix<f64>>) -> Result<Self> {
        let p = coeffs.len();
        let first = coeffs.first().ok_or_else(|| invalid("no coefficient blocks"))?;
        let (n, b) = (first.rows(), first.cols());
        if coeffs.iter().any(|c| c.rows() != n || c.cols() != b) {
            return Err(invalid("coefficient blocks must all be N×b"));
        }
        if b < 1 || exact_root(n, p as u32) != Some(b) {
            return Err(invalid(format!("N = {n} is not b^p with b = {b}, p = {p}")));
        }
        let cb = ChebyshevTransform::new(b);
        let factors = coeffs
            .iter()
            .map(|c| {
                let blocks = (0..n / b)
                    .map(|k| {
                        let slice = DenseMatrix::from_fn(b, b, |r, col| c.get(k * b + r, col));
                        cb.matrix().matmul(&slice)
                    })
                    .collect::<Result<Vec<_>>>()?;
                BlockDiagonalMatrix::from_blocks(&blocks)
            })
            .collect::<Result<Vec<_>>>()?;
        let m = MonarchFactorization::new(Recipe::Multivar, factors)?;
        Ok(Self { b, p, coeffs, m })
    }

    /// Causal-form coefficients: factor `a` uses the same `b×b` matrix
    /// `axis[a]` in every block (column `j_a` = coefficients of `ℓ^{(a)}_{j_a}`).
    pub fn from_axis_coefficients(axis: &[DenseMatrix<f64>]) -> Result<Self> {
        let p = axis.len();
        let b = axis.first().map_or(0, |a| a.rows());
        if b == 0 || axis.iter().any(|a| a.rows() != b || a.cols() != b) {
            return Err(invalid("axis coefficient matrices must be b×b"));
        }
        let n = b.pow(p as u32);
        Self::build(
            axis.iter()
                .map(|a| DenseMatrix::from_fn(n, b, |r, c| a.get(r % b, c)))
                .collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.m.n()
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn coefficients(&self) -> &[DenseMatrix<f64>] {
        &self.coeffs
    }

    pub fn factorization(&self) -> &MonarchFactorization<f64> {
        &self.m
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.m.matvec(v)
    }

    pub fn matvec_counted(&self, v: &[f64], counter: &OpCounter) -> Result<Vec<f64>> {
        self.m.matvec_counted(v, Some(counter))
    }

    pub fn materialize(&self) -> Result<DenseMatrix<f64>> {
        self.m.materialize()
    }

    /// Checks the causal degree restriction `deg ℓ^{(a)}_{j_a} ≤ b − j_a − 1`
    /// and that no factor depends on the already-evaluated digits
    /// `i_0..i_{a−1}`.
    pub fn check_causal(&self) -> Result<()> {
        let (b, p) = (self.b, self.p);
        for (a, c) in self.coeffs.iter().enumerate() {
            for k in 0..self.n() / b {
                for m in 0..b {
                    for col in 0..b {
                        let x = c.get(k * b + m, col);
                        if m + col > b - 1 && x != 0.0 {
                            return Err(Error::MaskViolation {
                                matrix: "multivariate coefficients",
                                row: k * b + m,
                                col,
                                reason: "degree exceeds b − j − 1",
                            });
                        }
                        // Blocks sharing the j-part must agree.
                        let j_span = b.pow((p - 1 - a) as u32);
                        let base = k % j_span;
                        if x != c.get(base * b + m, col) {
                            return Err(Error::MaskViolation {
                                matrix: "multivariate coefficients",
                                row: k * b + m,
                                col,
                                reason: "factor depends on an earlier output digit",
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn multivar_build(coeffs: Vec<DenseMatrix<f64>>) -> Result<MultivarMonarch> {
    MultivarMonarch::build(coeffs)
}

pub fn multivar_matvec(m: &MultivarMonarch, v: &[f64]) -> Result<Vec<f64>> {
    m.matvec(v)
}

/// Embeds a signal over `[0, ⌊b/2⌋)^p` into `[0, b)^p`, shifting every
/// component by `⌈b/2⌉`.
pub fn pad_multivar(k: &[f64], b: usize, p: usize) -> Result<Vec<f64>> {
    let h = b / 2;
    let c = b.div_ceil(2);
    let n_in = h.pow(p as u32);
    if k.len() != n_in {
        return Err(invalid(format!(
            "padding expects ⌊b/2⌋^p = {n_in} entries, got {}",
            k.len()
        )));
    }
    let mut out = vec![0.0; b.pow(p as u32)];
    for (j, &x) in k.iter().enumerate() {
        let mut idx = MultiIndex::unflatten(j, h, p);
        idx.0.iter_mut().for_each(|d| *d += c);
        out[idx.flatten(b)] = x;
    }
    Ok(out)
}

/// Multi-index form of [`pad_multivar`]; rejects components `≥ ⌊b/2⌋`.
pub fn pad_entries(entries: &[(MultiIndex, f64)], b: usize, p: usize) -> Result<Vec<f64>> {
    let h = b / 2;
    let mut k = vec![0.0; h.pow(p as u32)];
    for (idx, x) in entries {
        if idx.0.len() != p || idx.0.iter().any(|&d| d >= h) {
            return Err(invalid(format!("multi-index {:?} outside [0, {h})^{p}", idx.0)));
        }
        k[idx.flatten(h)] = *x;
    }
    pad_multivar(&k, b, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvOutput {
    /// Outputs on the input index set: the first `n` entries for the
    /// univariate operators, the multi-indices `[0, ⌊b/2⌋)^p` (flattened
    /// big-endian in radix `⌊b/2⌋`) for the multivariate one.
    Truncated,
    /// All `N = b^p` entries, indexed by output multi-index in `[0, b)^p`.
    Full,
}

/// Causal p-variate convolution with its inverse cached.
#[derive(Debug, Clone)]
pub struct MultivarCausalOperator {
    m: MultivarMonarch,
    inv: MonarchFactorization<f64>,
}

impl MultivarCausalOperator {
    pub fn new(m: MultivarMonarch) -> Result<Self> {
        if m.b < 2 {
            return Err(invalid("causal multivariate convolution needs b ≥ 2"));
        }
        m.check_causal()?;
        let inv = m.m.inverse()?;
        Ok(Self { m, inv })
    }

    pub fn monarch(&self) -> &MultivarMonarch {
        &self.m
    }

    /// Input length `⌊b/2⌋^p`.
    pub fn input_len(&self) -> usize {
        (self.m.b / 2).pow(self.m.p as u32)
    }

    pub fn conv(&self, k: &[f64], u: &[f64], output: ConvOutput) -> Result<Vec<f64>> {
        let (b, p) = (self.m.b, self.m.p);
        if k.len() != u.len() {
            return Err(invalid("kernel and input lengths differ"));
        }
        let mk = self.m.matvec(&pad_multivar(k, b, p)?)?;
        let mu = self.m.matvec(&pad_multivar(u, b, p)?)?;
        let f = self.inv.matvec(&hadamard(&mk, &mu, None)?)?;
        Ok(match output {
            ConvOutput::Full => f,
            ConvOutput::Truncated => {
                let h = b / 2;
                (0..self.input_len())
                    .map(|j| f[MultiIndex::unflatten(j, h, p).flatten(b)])
                    .collect()
            }
        })
    }
}

pub fn multivar_causal_conv(m: &MultivarMonarch, k: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    MultivarCausalOperator::new(m.clone())?.conv(k, u, ConvOutput::Truncated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{max_abs_diff, Field};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reversal_examples() {
        assert_eq!(subindex_reversal(2, 2).unwrap().map(), &[0, 2, 1, 3]);
        assert!(subindex_reversal(5, 1).unwrap().is_identity());
        let r = subindex_reversal(2, 3).unwrap();
        assert_eq!(r.map()[1], 4);
        assert_eq!(r.map(), &[0, 4, 2, 6, 1, 5, 3, 7]);
    }

    #[test]
    fn reversal_equals_composed_product() {
        for (b, p) in [(2, 1), (2, 2), (2, 3), (2, 5), (3, 3), (4, 2), (3, 4)] {
            assert_eq!(
                subindex_reversal(b, p).unwrap(),
                subindex_reversal_composed(b, p).unwrap(),
                "b={b} p={p}"
            );
        }
    }

    #[test]
    fn multi_index_round_trip() {
        for j in 0..81 {
            let m = MultiIndex::unflatten(j, 3, 4);
            assert_eq!(m.flatten(3), j);
        }
        assert_eq!(MultiIndex::unflatten(6, 2, 3).0, vec![1, 1, 0]);
        assert!(MultiIndex(vec![0, 3]) < MultiIndex(vec![1, 0]));
    }

    #[test]
    fn pad_examples() {
        assert_eq!(pad_multivar(&[7.0, 9.0], 4, 1).unwrap(), vec![0.0, 0.0, 7.0, 9.0]);
        assert_eq!(pad_multivar(&[5.0], 2, 2).unwrap(), vec![0.0, 0.0, 0.0, 5.0]);
        assert!(pad_multivar(&[0.0; 4], 4, 2).unwrap().iter().all(|&x| x == 0.0));
        assert!(pad_multivar(&[1.0; 3], 4, 2).is_err());
        assert!(pad_entries(&[(MultiIndex(vec![2, 0]), 1.0)], 4, 2).is_err());
        let p = pad_entries(&[(MultiIndex(vec![1, 0]), 3.0)], 4, 2).unwrap();
        assert_eq!(p[3 * 4 + 2], 3.0);
    }

    #[test]
    fn zero_first_factor_gives_zero_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut coeffs: Vec<DenseMatrix<f64>> =
            (0..3).map(|_| DenseMatrix::from_fn(27, 3, |_, _| f64::sample(&mut rng))).collect();
        coeffs[0] = DenseMatrix::zeros(27, 3);
        let m = MultivarMonarch::build(coeffs).unwrap();
        assert_eq!(m.materialize().unwrap().count_nonzero(), 0);
    }

    #[test]
    fn dimension_checks() {
        assert!(MultivarMonarch::build(vec![DenseMatrix::zeros(8, 2), DenseMatrix::zeros(8, 2)]).is_err());
        assert!(MultivarMonarch::build(vec![DenseMatrix::zeros(9, 3), DenseMatrix::zeros(8, 3)]).is_err());
        let m = MultivarMonarch::build(vec![DenseMatrix::zeros(9, 3); 2]).unwrap();
        assert!(m.matvec(&[0.0; 8]).is_err());
    }

    #[test]
    fn causal_check_flags_degree_and_dependence() {
        let b = 4;
        let upper = DenseMatrix::from_fn(b, b, |m, j| if m + j <= b - 1 { 1.0 + m as f64 } else { 0.0 });
        let ok = MultivarMonarch::from_axis_coefficients(&[upper.clone(), upper.clone()]).unwrap();
        assert!(ok.check_causal().is_ok());

        let mut bad = upper.clone();
        bad.set(3, 2, 0.5);
        let m = MultivarMonarch::from_axis_coefficients(&[upper.clone(), bad]).unwrap();
        assert!(matches!(m.check_causal(), Err(Error::MaskViolation { .. })));

        // Factor 1 varying with i_0 (its block index) is not polynomial.
        let mut c1 = DenseMatrix::from_fn(16, b, |r, c| upper.get(r % b, c));
        c1.set(4, 0, 7.0);
        let c0 = DenseMatrix::from_fn(16, b, |r, c| upper.get(r % b, c));
        let m = MultivarMonarch::build(vec![c0, c1]).unwrap();
        assert!(matches!(m.check_causal(), Err(Error::MaskViolation { .. })));
    }

    #[test]
    fn counter_matches_mac_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (b, p) in [(2usize, 3usize), (3, 3), (4, 2), (2, 6)] {
            let n = b.pow(p as u32);
            let coeffs = (0..p).map(|_| DenseMatrix::from_fn(n, b, |_, _| f64::sample(&mut rng))).collect();
            let m = MultivarMonarch::build(coeffs).unwrap();
            let c = OpCounter::new();
            m.matvec_counted(&vec![1.0; n], &c).unwrap();
            assert_eq!(c.macs(crate::field::FieldKind::Real), (p * (n / b) * b * b) as u64);
        }
    }

    #[test]
    fn linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let coeffs = (0..3).map(|_| DenseMatrix::from_fn(27, 3, |_, _| f64::sample(&mut rng))).collect();
        let m = MultivarMonarch::build(coeffs).unwrap();
        let u: Vec<f64> = (0..27).map(|_| f64::sample(&mut rng)).collect();
        let v: Vec<f64> = (0..27).map(|_| f64::sample(&mut rng)).collect();
        let combo: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let lhs = m.matvec(&combo).unwrap();
        let (mu, mv) = (m.matvec(&u).unwrap(), m.matvec(&v).unwrap());
        let rhs: Vec<f64> = mu.iter().zip(&mv).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        assert!(max_abs_diff(&lhs, &rhs) < 1e-12);
    }
}
