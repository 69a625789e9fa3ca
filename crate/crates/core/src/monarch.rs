//! Order-p Monarch matrices: a chain of index permutations and block-diagonal
//! factors, applied in `O(p·N^{(p+1)/p})` without forming the `N×N` matrix.
//!
//! Two permutation recipes are supported:
//!
//! * [`Recipe::Order2`]: `M = P·L·P·R·P` with `P = σ(√N, N)`. Factors are
//!   stored in application order, `factors = [R, L]`.
//! * [`Recipe::Multivar`]: `M = B_{p-1}·Q_{p-1} ⋯ Q_1·B_0·P^R` with `P^R` the
//!   sub-index reversal and `Q_a = P_{b, b^{p-a+1}, N}`; see [`crate::multivar`].
//! * [`Recipe::OrderP`]: `P^R·B_{p-1}·Q_{p-1} ⋯ Q_1·B_0·P^R`, the `Multivar`
//!   chain followed by a second sub-index reversal. For `p = 2` this is
//!   exactly `P·L·P·R·P`; for general `p` it holds the radix-`b` DFT
//!   ([`monarch_dft_order`]).
//!
//! The coefficient side ([`CoefficientMatrices`], [`coeffs_to_factors`]) builds
//! the factors from polynomial coefficients so that column `j = j1·√N + j0`
//! of `M` holds the evaluations of `q_j(Z) = ℓ_{j0}(Z)·r̃_{j0,j1}(Z^{√N})` at
//! `ω_N^i`.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::field::{
    exact_root, exact_sqrt, omega, random_block_diagonal, BlockDiagonalMatrix, DenseMatrix,
    Field, FieldKind, IndexPermutation, OpCounter,
};
use crate::multivar::subindex_reversal;

/// Largest size `materialize` will agree to build.
pub const MATERIALIZE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    Order2,
    Multivar,
    /// Inverse of a `Multivar` chain (reversed steps, inverted permutations).
    MultivarInverse,
    OrderP,
    /// Inverse of an `OrderP` chain.
    OrderPInverse,
}

impl Recipe {
    pub fn tag(self) -> u16 {
        match self {
            Recipe::Order2 => 0,
            Recipe::Multivar => 1,
            Recipe::MultivarInverse => 2,
            Recipe::OrderP => 3,
            Recipe::OrderPInverse => 4,
        }
    }

    pub fn from_tag(tag: u16) -> Option<Self> {
        match tag {
            0 => Some(Recipe::Order2),
            1 => Some(Recipe::Multivar),
            2 => Some(Recipe::MultivarInverse),
            3 => Some(Recipe::OrderP),
            4 => Some(Recipe::OrderPInverse),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Step {
    Permute(IndexPermutation),
    Factor(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonarchFactorization<T> {
    n: usize,
    p: usize,
    b: usize,
    factors: Vec<BlockDiagonalMatrix<T>>,
    recipe: Recipe,
    chain: Vec<Step>,
}

fn order2_chain(n: usize, b: usize) -> Result<Vec<Step>> {
    let perm = IndexPermutation::sigma(b, n)?;
    Ok(vec![
        Step::Permute(perm.clone()),
        Step::Factor(0),
        Step::Permute(perm.clone()),
        Step::Factor(1),
        Step::Permute(perm),
    ])
}

fn multivar_chain(n: usize, b: usize, p: usize) -> Result<Vec<Step>> {
    let mut steps = Vec::with_capacity(2 * p);
    let rev = subindex_reversal(b, p)?;
    if !rev.is_identity() {
        steps.push(Step::Permute(rev));
    }
    steps.push(Step::Factor(0));
    for a in 1..p {
        let chunk = b.pow((p - a + 1) as u32);
        steps.push(Step::Permute(IndexPermutation::block_sigma(b, chunk, n)?));
        steps.push(Step::Factor(a));
    }
    Ok(steps)
}

fn order_p_chain(n: usize, b: usize, p: usize) -> Result<Vec<Step>> {
    let mut steps = multivar_chain(n, b, p)?;
    let rev = subindex_reversal(b, p)?;
    if !rev.is_identity() {
        steps.push(Step::Permute(rev));
    }
    Ok(steps)
}

fn invert_chain(chain: &[Step], p: usize) -> Vec<Step> {
    chain
        .iter()
        .rev()
        .map(|s| match s {
            Step::Permute(q) => Step::Permute(q.inverse()),
            Step::Factor(a) => Step::Factor(p - 1 - a),
        })
        .collect()
}

fn recipe_chain(recipe: Recipe, n: usize, b: usize, p: usize) -> Result<Vec<Step>> {
    match recipe {
        Recipe::Order2 => order2_chain(n, b),
        Recipe::Multivar => multivar_chain(n, b, p),
        Recipe::MultivarInverse => Ok(invert_chain(&multivar_chain(n, b, p)?, p)),
        Recipe::OrderP => order_p_chain(n, b, p),
        Recipe::OrderPInverse => Ok(invert_chain(&order_p_chain(n, b, p)?, p)),
    }
}

impl<T: Field> MonarchFactorization<T> {
    /// Assembles a factorization; `factors` are in application order.
    pub fn new(recipe: Recipe, factors: Vec<BlockDiagonalMatrix<T>>) -> Result<Self> {
        let p = factors.len();
        let first = factors.first().ok_or_else(|| invalid("no factors"))?;
        let (n, b) = (first.dim(), first.block_size());
        if factors.iter().any(|f| f.dim() != n || f.block_size() != b) {
            return Err(invalid("factors disagree on size or block size"));
        }
        if exact_root(n, p as u32) != Some(b) {
            return Err(invalid(format!("block size {b} is not the {p}-th root of {n}")));
        }
        if recipe == Recipe::Order2 && p != 2 {
            return Err(invalid("the PLPRP recipe needs exactly two factors"));
        }
        let chain = recipe_chain(recipe, n, b, p)?;
        Ok(Self {
            n,
            p,
            b,
            factors,
            recipe,
            chain,
        })
    }

    /// Order-2 Monarch `P·L·P·R·P`.
    pub fn order2(r: BlockDiagonalMatrix<T>, l: BlockDiagonalMatrix<T>) -> Result<Self> {
        Self::new(Recipe::Order2, vec![r, l])
    }

    pub fn identity(n: usize, p: usize, recipe: Recipe) -> Result<Self> {
        let b = root_or_err(n, p)?;
        Self::new(recipe, vec![BlockDiagonalMatrix::identity(n / b, b); p])
    }

    /// Test initialization: i.i.d. entries (uniform on [-1,1] or the unit
    /// disk) with `+2·I` on every block.
    pub fn random<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Result<Self> {
        let b = root_or_err(n, p)?;
        let recipe = if p == 2 {
            Recipe::Order2
        } else {
            Recipe::OrderP
        };
        let factors = (0..p)
            .map(|_| random_block_diagonal(rng, n / b, b, 2.0))
            .collect();
        Self::new(recipe, factors)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn block_size(&self) -> usize {
        self.b
    }

    pub fn recipe(&self) -> Recipe {
        self.recipe
    }

    pub fn factors(&self) -> &[BlockDiagonalMatrix<T>] {
        &self.factors
    }

    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        self.matvec_counted(v, None)
    }

    pub fn matvec_counted(&self, v: &[T], counter: Option<&OpCounter>) -> Result<Vec<T>> {
        if v.len() != self.n {
            return Err(invalid(format!(
                "Monarch matvec: length {} vs N = {}",
                v.len(),
                self.n
            )));
        }
        let mut x = v.to_vec();
        for step in &self.chain {
            x = match step {
                Step::Permute(q) => q.apply(&x)?,
                Step::Factor(a) => self.factors[*a].matvec_counted(&x, counter)?,
            };
        }
        Ok(x)
    }

    /// Column `j`, computed with a zero-skipping pass through the chain.
    fn column_sparse(&self, j: usize) -> Vec<T> {
        let b = self.b;
        let mut x = vec![T::zero(); self.n];
        x[j] = T::one();
        for step in &self.chain {
            x = match step {
                Step::Permute(q) => q.apply(&x).expect("sized"),
                Step::Factor(a) => {
                    let f = &self.factors[*a];
                    let mut out = vec![T::zero(); self.n];
                    for (k, (xin, o)) in x.chunks(b).zip(out.chunks_mut(b)).enumerate() {
                        for (c, &xc) in xin.iter().enumerate() {
                            if xc == T::zero() {
                                continue;
                            }
                            for (r, slot) in o.iter_mut().enumerate() {
                                *slot += f.get(k, r, c) * xc;
                            }
                        }
                    }
                    out
                }
            };
        }
        x
    }

    /// Column `j` of `M`: the evaluations of basis polynomial `q_j` over the
    /// evaluation grid.
    pub fn basis_eval(&self, j: usize) -> Result<Vec<T>> {
        if j >= self.n {
            return Err(invalid(format!("column {j} out of range for N = {}", self.n)));
        }
        Ok(self.column_sparse(j))
    }

    pub fn materialize(&self) -> Result<DenseMatrix<T>> {
        if self.n > MATERIALIZE_LIMIT {
            return Err(Error::ResourceLimit(format!(
                "refusing to materialize N = {} > {MATERIALIZE_LIMIT}",
                self.n
            )));
        }
        let cols: Vec<Vec<T>> = (0..self.n)
            .into_par_iter()
            .map(|j| self.column_sparse(j))
            .collect();
        DenseMatrix::from_columns(self.n, &cols)
    }

    /// `M⁻¹` in factored form: inverted blocks, reversed chain.
    pub fn inverse(&self) -> Result<Self> {
        let factors = self
            .factors
            .iter()
            .enumerate()
            .rev()
            .map(|(a, f)| f.inverse(a))
            .collect::<Result<Vec<_>>>()?;
        let recipe = match self.recipe {
            Recipe::Order2 => Recipe::Order2,
            Recipe::Multivar => Recipe::MultivarInverse,
            Recipe::MultivarInverse => Recipe::Multivar,
            Recipe::OrderP => Recipe::OrderPInverse,
            Recipe::OrderPInverse => Recipe::OrderP,
        };
        Ok(Self {
            n: self.n,
            p: self.p,
            b: self.b,
            factors,
            recipe,
            chain: invert_chain(&self.chain, self.p),
        })
    }

    /// `M⁻¹·y`. Factors the blocks on every call; hold on to [`Self::inverse`]
    /// when applying repeatedly.
    pub fn inverse_matvec(&self, y: &[T]) -> Result<Vec<T>> {
        if y.len() != self.n {
            return Err(invalid("inverse matvec: length mismatch"));
        }
        self.inverse()?.matvec(y)
    }

    /// Applies `f` to every block entry of factor `a`.
    pub fn map_factor(&self, a: usize, f: impl Fn(T) -> T) -> Self {
        let mut out = self.clone();
        out.factors[a] = out.factors[a].map(f);
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(16 + self.p * self.n * self.b * 16);
        buf.extend_from_slice(MAGIC);
        buf.write_u32::<LittleEndian>(self.n as u32).unwrap();
        buf.write_u16::<LittleEndian>(self.p as u16).unwrap();
        buf.write_u16::<LittleEndian>(T::KIND.tag()).unwrap();
        buf.write_u16::<LittleEndian>(self.recipe.tag()).unwrap();
        buf.write_u16::<LittleEndian>(0).unwrap();
        for f in &self.factors {
            for &x in f.raw() {
                buf.write_f64::<LittleEndian>(x.re()).unwrap();
                buf.write_f64::<LittleEndian>(x.im()).unwrap();
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = Header::parse(bytes)?;
        if header.field != T::KIND {
            return Err(Error::Format(format!(
                "file holds a {:?} factorization, expected {:?}",
                header.field,
                T::KIND
            )));
        }
        let (n, p, b) = (header.n, header.p, header.b);
        let expected = 16 + p * n * b * 16;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        let mut rd = &bytes[16..];
        let mut factors = Vec::with_capacity(p);
        for _ in 0..p {
            let mut data = Vec::with_capacity(n * b);
            for _ in 0..n * b {
                let re = rd.read_f64::<LittleEndian>().map_err(io_err)?;
                let im = rd.read_f64::<LittleEndian>().map_err(io_err)?;
                data.push(T::from_parts(re, im).ok_or_else(|| {
                    Error::Format("nonzero imaginary part in a real factorization".into())
                })?);
            }
            factors.push(BlockDiagonalMatrix::from_raw(n / b, b, data));
        }
        Self::new(header.recipe, factors)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(io_err)?;
        f.write_all(&self.to_bytes()).map_err(io_err)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(io_err)?;
        Self::from_bytes(&bytes)
    }
}

const MAGIC: &[u8; 4] = b"MNR1";

fn io_err(e: std::io::Error) -> Error {
    Error::Format(e.to_string())
}

/// Parsed 16-byte file header: magic, u32 N, u16 p, u16 field tag,
/// u16 recipe tag, u16 reserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub n: usize,
    pub p: usize,
    pub b: usize,
    pub field: FieldKind,
    pub recipe: Recipe,
}

impl Header {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing MNR1 header".into()));
        }
        let mut rd = &bytes[4..16];
        let n = rd.read_u32::<LittleEndian>().map_err(io_err)? as usize;
        let p = rd.read_u16::<LittleEndian>().map_err(io_err)? as usize;
        let field = FieldKind::from_tag(rd.read_u16::<LittleEndian>().map_err(io_err)?)
            .ok_or_else(|| Error::Format("unknown field tag".into()))?;
        let recipe = Recipe::from_tag(rd.read_u16::<LittleEndian>().map_err(io_err)?)
            .ok_or_else(|| Error::Format("unknown recipe tag".into()))?;
        let b = exact_root(n, p as u32)
            .ok_or_else(|| Error::Format(format!("N = {n} is not a {p}-th power")))?;
        Ok(Self {
            n,
            p,
            b,
            field,
            recipe,
        })
    }
}

fn root_or_err(n: usize, p: usize) -> Result<usize> {
    if p == 0 {
        return Err(invalid("order p must be positive"));
    }
    exact_root(n, p as u32).ok_or_else(|| invalid(format!("N = {n} is not a perfect {p}-th power")))
}

pub fn monarch_matvec<T: Field>(m: &MonarchFactorization<T>, v: &[T]) -> Result<Vec<T>> {
    m.matvec(v)
}

pub fn monarch_materialize<T: Field>(m: &MonarchFactorization<T>) -> Result<DenseMatrix<T>> {
    m.materialize()
}

pub fn monarch_inverse_matvec<T: Field>(m: &MonarchFactorization<T>, y: &[T]) -> Result<Vec<T>> {
    m.inverse_matvec(y)
}

pub fn factors_to_basis_eval<T: Field>(m: &MonarchFactorization<T>, j: usize) -> Result<Vec<T>> {
    m.basis_eval(j)
}

/// Coefficients `L̃` and `R̃`, both `N×√N`.
///
/// Column `c` of `L̃` holds the coefficients of `ℓ_c(Z)` (degree `< N`). Block
/// `R̃_c` (rows `c·√N .. (c+1)·√N`) has in column `c'` the coefficients of
/// `r̃_{c,c'}(Y)` (degree `< √N`).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrices<T> {
    l: DenseMatrix<T>,
    r: DenseMatrix<T>,
    s: usize,
}

impl<T: Field> CoefficientMatrices<T> {
    pub fn new(l: DenseMatrix<T>, r: DenseMatrix<T>) -> Result<Self> {
        let s = l.cols();
        let n = s * s;
        if s == 0 || l.rows() != n || r.rows() != n || r.cols() != s {
            return Err(invalid(format!(
                "coefficient matrices must be N×√N; got L̃ {}x{}, R̃ {}x{}",
                l.rows(),
                l.cols(),
                r.rows(),
                r.cols()
            )));
        }
        Ok(Self { l, r, s })
    }

    /// `L̃` top block and every `R̃` block equal to the identity.
    pub fn identity(n: usize) -> Result<Self> {
        let s = exact_sqrt(n).ok_or_else(|| invalid(format!("N = {n} is not a perfect square")))?;
        let l = DenseMatrix::from_fn(n, s, |a, c| if a == c { T::one() } else { T::zero() });
        let r = DenseMatrix::from_fn(n, s, |a, c| if a % s == c { T::one() } else { T::zero() });
        Self::new(l, r)
    }

    pub fn n(&self) -> usize {
        self.s * self.s
    }

    pub fn sqrt_n(&self) -> usize {
        self.s
    }

    pub fn l(&self) -> &DenseMatrix<T> {
        &self.l
    }

    pub fn r(&self) -> &DenseMatrix<T> {
        &self.r
    }

    /// `r̃_{block, col}[a]`.
    pub fn r_block_entry(&self, block: usize, a: usize, col: usize) -> T {
        self.r.get(block * self.s + a, col)
    }
}

/// Shared tail of the blocky algorithms: given the transformed columns
/// `T_N·L̃` (one `Vec` per column) and the small transform `T_s`, build
/// `L` blocks from `P·T_N·L̃` and `R` blocks `T_s·R̃_c`.
pub(crate) fn assemble_blocky<T: Field>(
    transformed_l: &[Vec<T>],
    r: &DenseMatrix<T>,
    small: &DenseMatrix<T>,
) -> Result<MonarchFactorization<T>> {
    let s = small.rows();
    let n = s * s;
    let l = BlockDiagonalMatrix::from_fn(s, s, |i0, i1, c| transformed_l[c][i1 * s + i0]);
    let r_blocks = (0..s)
        .map(|k| {
            let blk = DenseMatrix::from_fn(s, s, |a, c| r.get(k * s + a, c));
            small.matmul(&blk)
        })
        .collect::<Result<Vec<_>>>()?;
    let r = BlockDiagonalMatrix::from_blocks(&r_blocks)?;
    debug_assert_eq!(r.dim(), n);
    MonarchFactorization::order2(r, l)
}

/// Dense `s×s` DFT matrix, `F[i,j] = ω_s^{ij}`.
pub fn dft_matrix(s: usize) -> DenseMatrix<Complex64> {
    DenseMatrix::from_fn(s, s, |i, j| omega(s, i * j))
}

/// DFT factors written down directly; `coeffs_to_factors` uses it to apply
/// `F_N` to the columns of `L̃`.
fn dft_engine(n: usize, s: usize) -> Result<MonarchFactorization<Complex64>> {
    let l = BlockDiagonalMatrix::from_fn(s, s, |i0, i1, j| omega(n, (i1 * s + i0) * j));
    let fs = dft_matrix(s);
    let r = BlockDiagonalMatrix::from_fn(s, s, |_, a, c| fs.get(a, c));
    MonarchFactorization::order2(r, l)
}

/// Blocky Monarch: coefficients to the factors of `M = P·L·P·R·P`.
pub fn coeffs_to_factors(
    c: &CoefficientMatrices<Complex64>,
) -> Result<MonarchFactorization<Complex64>> {
    let (n, s) = (c.n(), c.sqrt_n());
    let engine = dft_engine(n, s)?;
    let transformed: Vec<Vec<Complex64>> = (0..s)
        .into_par_iter()
        .map(|col| engine.matvec(&c.l.column(col)))
        .collect::<Result<_>>()?;
    assemble_blocky(&transformed, &c.r, &dft_matrix(s))
}

/// The `N`-point DFT (`[i,j] = ω_N^{ij}`) as an order-2 Monarch.
pub fn monarch_dft(n: usize) -> Result<MonarchFactorization<Complex64>> {
    coeffs_to_factors(&CoefficientMatrices::identity(n)?)
}

/// Inverse DFT: the conjugate DFT scaled by `1/N`.
pub fn monarch_idft(n: usize) -> Result<MonarchFactorization<Complex64>> {
    let f = monarch_dft(n)?;
    let scale = 1.0 / n as f64;
    Ok(f.map_factor(0, |x| x.conj()).map_factor(1, |x| x.conj() * scale))
}

/// The radix-`b` DFT (`[i,j] = ω_N^{ij}`, `N = b^p`) as an order-`p`
/// Monarch with the [`Recipe::OrderP`] chain.
///
/// Factor `a` contracts the input digit `j_a` (big-endian) and produces the
/// output digit `I_a` (little-endian): block `k` holds the already-produced
/// digits `I_0..I_{a−1}` in its leading `a` radix-`b` digits, and entry
/// `[r, c] = ω_N^{c·(Σ_{m<a} I_m·b^m + r·b^a)·b^{p−1−a}}`.
pub fn monarch_dft_order(n: usize, p: usize) -> Result<MonarchFactorization<Complex64>> {
    let b = root_or_err(n, p)?;
    if p == 1 {
        return MonarchFactorization::new(Recipe::OrderP, vec![BlockDiagonalMatrix::from_blocks(&[dft_matrix(n)])?]);
    }
    let factors = (0..p)
        .map(|a| {
            BlockDiagonalMatrix::from_fn(n / b, b, |k, r, c| {
                // Leading a digits of the (p−1)-digit block index.
                let mut low = 0usize;
                for m in 0..a {
                    let digit = (k / b.pow((p - 2 - m) as u32)) % b;
                    low += digit * b.pow(m as u32);
                }
                let idx = low + r * b.pow(a as u32);
                omega(n, (c * idx % n) * b.pow((p - 1 - a) as u32))
            })
        })
        .collect();
    MonarchFactorization::new(Recipe::OrderP, factors)
}

/// Inverse of [`monarch_dft_order`]: conjugated factors, scaled by `1/N`.
pub fn monarch_idft_order(n: usize, p: usize) -> Result<MonarchFactorization<Complex64>> {
    let f = monarch_dft_order(n, p)?;
    let scale = 1.0 / n as f64;
    let mut g = f.clone();
    for a in 0..p {
        g = g.map_factor(a, |x| x.conj());
    }
    Ok(g.map_factor(0, |x| x * scale))
}

/// Smallest order `p ≥ 2` with `n` a perfect `p`-th power, if any.
pub fn smallest_order(n: usize) -> Option<usize> {
    if n < 4 {
        return None;
    }
    (2..=usize::BITS as usize).find(|&p| exact_root(n, p as u32).is_some_and(|b| b >= 2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlopOp {
    Matvec,
    Conv,
}

/// Closed-form real FLOP counts for complex operators.
///
/// * matvec: `p·(N/b)·b²` complex MACs at 8 real FLOPs each; permutations
///   are free.
/// * conv: three matvecs plus `N` complex products at 6 real FLOPs each.
pub fn flop_count(n: usize, p: usize, op: FlopOp) -> Result<u64> {
    let b = root_or_err(n, p)?;
    let matvec = (p * (n / b) * b * b * 8) as u64;
    Ok(match op {
        FlopOp::Matvec => matvec,
        FlopOp::Conv => 3 * matvec + 6 * n as u64,
    })
}

/// Dense complex `N×N` matvec: `N²` MACs at 8 FLOPs each.
pub fn dense_flop_count(n: usize) -> u64 {
    8 * (n as u64) * (n as u64)
}
