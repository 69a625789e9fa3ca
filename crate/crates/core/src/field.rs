//! Scalar fields, dense and block-diagonal matrices, and index permutations.
//!
//! Everything here is float64. A scalar's field (real or complex) is carried by
//! its Rust type through [`Field`], so a real pipeline stays real-typed end to
//! end. Index pairs `(i1, i0)` always mean `i = i1 * b + i0`.

use std::f64::consts::PI;
use std::fmt::Debug;
use std::iter::Sum;
use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64;
use num_traits::NumAssign;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

/// Which field a scalar lives in. Also used as the on-disk field tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldKind {
    Real,
    Complex,
}

impl FieldKind {
    pub fn tag(self) -> u16 {
        match self {
            FieldKind::Real => 0,
            FieldKind::Complex => 1,
        }
    }

    pub fn from_tag(tag: u16) -> Option<Self> {
        match tag {
            0 => Some(FieldKind::Real),
            1 => Some(FieldKind::Complex),
            _ => None,
        }
    }
}

/// A float64 scalar field: `f64` or `Complex64`.
pub trait Field:
    NumAssign + Copy + Send + Sync + Debug + Sum + std::ops::Neg<Output = Self> + 'static
{
    const KIND: FieldKind;

    fn from_f64(x: f64) -> Self;
    /// `None` when `im != 0` and the field is real.
    fn from_parts(re: f64, im: f64) -> Option<Self>;
    fn re(self) -> f64;
    fn im(self) -> f64;
    fn modulus(self) -> f64;
    fn conj(self) -> Self;
    fn to_complex(self) -> Complex64 {
        Complex64::new(self.re(), self.im())
    }
    fn is_finite(self) -> bool {
        self.re().is_finite() && self.im().is_finite()
    }
    /// Uniform on [-1, 1] (real) or on the unit disk (complex).
    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Field for f64 {
    const KIND: FieldKind = FieldKind::Real;

    fn from_f64(x: f64) -> Self {
        x
    }
    fn from_parts(re: f64, im: f64) -> Option<Self> {
        (im == 0.0).then_some(re)
    }
    fn re(self) -> f64 {
        self
    }
    fn im(self) -> f64 {
        0.0
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn conj(self) -> Self {
        self
    }
    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen_range(-1.0..=1.0)
    }
}

impl Field for Complex64 {
    const KIND: FieldKind = FieldKind::Complex;

    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn from_parts(re: f64, im: f64) -> Option<Self> {
        Some(Complex64::new(re, im))
    }
    fn re(self) -> f64 {
        self.re
    }
    fn im(self) -> f64 {
        self.im
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let r = rng.gen::<f64>().sqrt();
        let theta = rng.gen_range(0.0..2.0 * PI);
        Complex64::from_polar(r, theta)
    }
}

/// `ω_n^k` with `ω_n = exp(2πι/n)`. The exponent is reduced mod `n` first.
pub fn omega(n: usize, k: usize) -> Complex64 {
    let k = k % n;
    Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64)
}

/// Integer square root when `n` is a perfect square.
pub fn exact_sqrt(n: usize) -> Option<usize> {
    exact_root(n, 2)
}

/// Integer `p`-th root when `n` is a perfect `p`-th power.
pub fn exact_root(n: usize, p: u32) -> Option<usize> {
    if p == 0 || n == 0 {
        return None;
    }
    let guess = (n as f64).powf(1.0 / p as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1).find(|&b| b.checked_pow(p) == Some(n))
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Field> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_columns(rows: usize, columns: &[Vec<T>]) -> Result<Self> {
        if columns.iter().any(|c| c.len() != rows) {
            return Err(invalid("column length mismatch"));
        }
        Ok(Self::from_fn(rows, columns.len(), |i, j| columns[j][i]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn map<U: Field>(&self, f: impl Fn(T) -> U) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, a: T) -> Self {
        self.map(|x| x * a)
    }

    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.cols {
            return Err(invalid(format!(
                "matvec: vector length {} vs {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &x)| a * x).sum())
            .collect())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(invalid(format!(
                "matmul: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).modulus())
            .fold(0.0, f64::max)
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&x| x != T::zero()).count()
    }

    /// Max absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j).modulus()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// LU factorization with partial pivoting, `P·A = L·U`.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Field> Lu<T> {
    /// Fails with `SingularSystem` when a pivot vanishes relative to the
    /// matrix scale.
    pub fn factor(a: &DenseMatrix<T>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(invalid("LU of a non-square matrix"));
        }
        let scale = a.as_slice().iter().map(|x| x.modulus()).fold(0.0, f64::max);
        let mut lu = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmag) = (k..n)
                .map(|i| (i, lu[i * n + k].modulus()))
                .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if !(pmag > scale * 1e-14) {
                return Err(Error::SingularSystem(format!("zero pivot at column {k}")));
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                if f != T::zero() {
                    for j in k + 1..n {
                        let u = lu[k * n + j];
                        lu[i * n + j] -= f * u;
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.n;
        if b.len() != n {
            return Err(invalid("LU solve: length mismatch"));
        }
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        Ok(x)
    }

    pub fn inverse(&self) -> DenseMatrix<T> {
        let n = self.n;
        let mut inv = DenseMatrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            let col = self.solve(&e).expect("length checked");
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
        }
        inv
    }
}

/// Operation counter for instrumented matvecs. Counts are exact event
/// counts, not estimates.
#[derive(Debug, Default)]
pub struct OpCounter {
    complex_macs: AtomicU64,
    real_macs: AtomicU64,
    complex_products: AtomicU64,
    real_products: AtomicU64,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_macs(&self, kind: FieldKind, n: u64) {
        match kind {
            FieldKind::Complex => self.complex_macs.fetch_add(n, Ordering::Relaxed),
            FieldKind::Real => self.real_macs.fetch_add(n, Ordering::Relaxed),
        };
    }

    pub fn add_products(&self, kind: FieldKind, n: u64) {
        match kind {
            FieldKind::Complex => self.complex_products.fetch_add(n, Ordering::Relaxed),
            FieldKind::Real => self.real_products.fetch_add(n, Ordering::Relaxed),
        };
    }

    pub fn macs(&self, kind: FieldKind) -> u64 {
        match kind {
            FieldKind::Complex => self.complex_macs.load(Ordering::Relaxed),
            FieldKind::Real => self.real_macs.load(Ordering::Relaxed),
        }
    }

    pub fn products(&self, kind: FieldKind) -> u64 {
        match kind {
            FieldKind::Complex => self.complex_products.load(Ordering::Relaxed),
            FieldKind::Real => self.real_products.load(Ordering::Relaxed),
        }
    }

    /// Real FLOPs: complex MAC = 8, complex product = 6, real MAC = 2,
    /// real product = 1.
    pub fn flops(&self) -> u64 {
        8 * self.macs(FieldKind::Complex)
            + 6 * self.products(FieldKind::Complex)
            + 2 * self.macs(FieldKind::Real)
            + self.products(FieldKind::Real)
    }
}

/// Elementwise product, optionally counted.
pub fn hadamard<T: Field>(a: &[T], b: &[T], counter: Option<&OpCounter>) -> Result<Vec<T>> {
    if a.len() != b.len() {
        return Err(invalid("elementwise product: length mismatch"));
    }
    if let Some(c) = counter {
        c.add_products(T::KIND, a.len() as u64);
    }
    Ok(a.iter().zip(b).map(|(&x, &y)| x * y).collect())
}

/// Block count above which block products are spread over the rayon pool.
const PAR_THRESHOLD: usize = 1 << 14;

/// `N×N` matrix stored as `N/b` dense `b×b` diagonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagonalMatrix<T> {
    num_blocks: usize,
    block_size: usize,
    // Block k occupies data[k*b*b..(k+1)*b*b], row-major.
    data: Vec<T>,
}

impl<T: Field> BlockDiagonalMatrix<T> {
    pub fn identity(num_blocks: usize, block_size: usize) -> Self {
        Self::from_fn(num_blocks, block_size, |_, r, c| {
            if r == c {
                T::one()
            } else {
                T::zero()
            }
        })
    }

    /// `f(block, row, col)`.
    pub fn from_fn(
        num_blocks: usize,
        block_size: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(num_blocks * block_size * block_size);
        for k in 0..num_blocks {
            for r in 0..block_size {
                for c in 0..block_size {
                    data.push(f(k, r, c));
                }
            }
        }
        Self {
            num_blocks,
            block_size,
            data,
        }
    }

    pub fn from_blocks(blocks: &[DenseMatrix<T>]) -> Result<Self> {
        let b = blocks.first().map_or(0, |m| m.rows());
        if blocks.iter().any(|m| m.rows() != b || m.cols() != b) {
            return Err(invalid("blocks must all be b×b"));
        }
        let data = blocks.iter().flat_map(|m| m.as_slice().iter().copied()).collect();
        Ok(Self {
            num_blocks: blocks.len(),
            block_size: b,
            data,
        })
    }

    pub(crate) fn from_raw(num_blocks: usize, block_size: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), num_blocks * block_size * block_size);
        Self {
            num_blocks,
            block_size,
            data,
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn dim(&self) -> usize {
        self.num_blocks * self.block_size
    }

    pub fn raw(&self) -> &[T] {
        &self.data
    }

    pub fn block(&self, k: usize) -> DenseMatrix<T> {
        let bb = self.block_size * self.block_size;
        DenseMatrix::from_vec(
            self.block_size,
            self.block_size,
            self.data[k * bb..(k + 1) * bb].to_vec(),
        )
        .expect("block shape")
    }

    pub fn get(&self, k: usize, r: usize, c: usize) -> T {
        let b = self.block_size;
        self.data[k * b * b + r * b + c]
    }

    /// Per-block map, used for conjugation and scaling.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            num_blocks: self.num_blocks,
            block_size: self.block_size,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Block `k` of the output is `blocks[k] · v_k`.
    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        self.matvec_counted(v, None)
    }

    pub fn matvec_counted(&self, v: &[T], counter: Option<&OpCounter>) -> Result<Vec<T>> {
        let b = self.block_size;
        if v.len() != self.dim() {
            return Err(invalid(format!(
                "block-diagonal matvec: vector length {} vs dimension {}",
                v.len(),
                self.dim()
            )));
        }
        let mut out = vec![T::zero(); v.len()];
        if b == 0 {
            return Ok(out);
        }
        let bb = b * b;
        let kernel = |(k, o): (usize, &mut [T])| {
            let blk = &self.data[k * bb..(k + 1) * bb];
            let x = &v[k * b..(k + 1) * b];
            for (r, slot) in o.iter_mut().enumerate() {
                let row = &blk[r * b..(r + 1) * b];
                let mut acc = T::zero();
                for (&a, &xv) in row.iter().zip(x) {
                    acc += a * xv;
                }
                *slot = acc;
            }
        };
        if self.data.len() >= PAR_THRESHOLD {
            out.par_chunks_mut(b).enumerate().for_each(kernel);
        } else {
            out.chunks_mut(b).enumerate().for_each(kernel);
        }
        if let Some(c) = counter {
            c.add_macs(T::KIND, (self.num_blocks * bb) as u64);
        }
        Ok(out)
    }

    pub fn materialize(&self) -> DenseMatrix<T> {
        let b = self.block_size;
        let n = self.dim();
        let mut m = DenseMatrix::zeros(n, n);
        for k in 0..self.num_blocks {
            for r in 0..b {
                for c in 0..b {
                    m.set(k * b + r, k * b + c, self.get(k, r, c));
                }
            }
        }
        m
    }

    /// Inverts every block by LU. `factor` only labels the error.
    pub fn inverse(&self, factor: usize) -> Result<Self> {
        let blocks = (0..self.num_blocks)
            .into_par_iter()
            .map(|k| {
                let blk = self.block(k);
                let lu = Lu::factor(&blk).map_err(|_| Error::SingularFactor { factor, block: k })?;
                let inv = lu.inverse();
                // Reject numerically singular blocks via a 1-norm condition estimate.
                let cond = blk.norm_one() * inv.norm_one();
                if !cond.is_finite() || cond > 1e13 {
                    return Err(Error::SingularFactor { factor, block: k });
                }
                Ok(inv)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_blocks(&blocks)
    }
}

/// Explicit permutation of `[0, N)`; `map[i]` is where source index `i` goes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexPermutation {
    map: Vec<usize>,
}

impl IndexPermutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &m in &map {
            if m >= n || std::mem::replace(&mut seen[m], true) {
                return Err(invalid("permutation map is not a bijection"));
            }
        }
        Ok(Self { map })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            map: (0..n).collect(),
        }
    }

    /// σ(b,N): `i = i1·b + i0 ↦ i0·(N/b) + i1`.
    pub fn sigma(b: usize, n: usize) -> Result<Self> {
        if b == 0 || n % b != 0 {
            return Err(invalid(format!("sigma: {b} does not divide {n}")));
        }
        let q = n / b;
        Ok(Self {
            map: (0..n).map(|i| (i % b) * q + i / b).collect(),
        })
    }

    /// `P_{b,M,N}`: σ(b,M) applied independently on each length-M chunk.
    pub fn block_sigma(b: usize, m: usize, n: usize) -> Result<Self> {
        if m == 0 || n % m != 0 {
            return Err(invalid(format!("block sigma: {m} does not divide {n}")));
        }
        let inner = Self::sigma(b, m)?;
        Ok(Self {
            map: (0..n).map(|i| (i / m) * m + inner.map[i % m]).collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.map.len()
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (i, &m) in self.map.iter().enumerate() {
            inv[m] = i;
        }
        Self { map: inv }
    }

    /// The permutation that applies `self` first, then `next`.
    pub fn then(&self, next: &Self) -> Result<Self> {
        if self.size() != next.size() {
            return Err(invalid("composing permutations of different sizes"));
        }
        Ok(Self {
            map: self.map.iter().map(|&m| next.map[m]).collect(),
        })
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &m)| i == m)
    }

    /// `out[map[i]] = v[i]`.
    pub fn apply<T: Copy>(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.map.len() {
            return Err(invalid(format!(
                "permutation of size {} applied to length {}",
                self.map.len(),
                v.len()
            )));
        }
        let mut out = v.to_vec();
        for (i, &m) in self.map.iter().enumerate() {
            out[m] = v[i];
        }
        Ok(out)
    }

    /// Matrix form `P` with `P[map[i], i] = 1` (tests only).
    pub fn materialize<T: Field>(&self) -> DenseMatrix<T> {
        let n = self.size();
        let mut m = DenseMatrix::zeros(n, n);
        for (i, &d) in self.map.iter().enumerate() {
            m.set(d, i, T::one());
        }
        m
    }
}

/// Free-function form of [`IndexPermutation::sigma`].
pub fn permutation_sigma(b: usize, n: usize) -> Result<IndexPermutation> {
    IndexPermutation::sigma(b, n)
}

pub fn apply_permutation<T: Copy>(p: &IndexPermutation, v: &[T]) -> Result<Vec<T>> {
    p.apply(v)
}

pub fn block_diag_matvec<T: Field>(b: &BlockDiagonalMatrix<T>, v: &[T]) -> Result<Vec<T>> {
    b.matvec(v)
}

pub fn materialize_blockdiag<T: Field>(b: &BlockDiagonalMatrix<T>) -> DenseMatrix<T> {
    b.materialize()
}

/// Random block-diagonal matrix: i.i.d. entries plus `boost·I` per block.
pub fn random_block_diagonal<T: Field, R: Rng + ?Sized>(
    rng: &mut R,
    num_blocks: usize,
    block_size: usize,
    boost: f64,
) -> BlockDiagonalMatrix<T> {
    BlockDiagonalMatrix::from_fn(num_blocks, block_size, |_, r, c| {
        let x = T::sample(rng);
        if r == c {
            x + T::from_f64(boost)
        } else {
            x
        }
    })
}

pub fn max_abs_diff<T: Field>(a: &[T], b: &[T]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).modulus())
        .fold(0.0, f64::max)
}

pub fn norm_inf<T: Field>(a: &[T]) -> f64 {
    a.iter().map(|x| x.modulus()).fold(0.0, f64::max)
}

pub fn unit_vector<T: Field>(n: usize, j: usize) -> Vec<T> {
    let mut e = vec![T::zero(); n];
    e[j] = T::one();
    e
}
