//! Monarch matrices and sub-quadratic Monarch convolutions.
//!
//! * [`field`]: scalars, dense and block-diagonal matrices, permutations,
//!   operation counters.
//! * [`monarch`]: order-p Monarch factorizations, the coefficient-to-factor
//!   map, the Monarch DFT, serialization and FLOP counts.
//! * [`causal`]: causal convolution over complex roots of unity.
//! * [`real_causal`]: causal convolution over the reals via Chebyshev bases.
//! * [`multivar`]: order-p Monarch matrices over Chebyshev nodes and the
//!   p-variate causal convolution.
//! * [`layer`]: the M2 mixer layer and the heads layer.
//! * [`oracle`]: brute-force references used by the tests.
//! * [`report`]: FLOP/timing sweeps and their reports.

pub mod causal;
pub mod error;
pub mod field;
pub mod layer;
pub mod monarch;
pub mod multivar;
pub mod oracle;
pub mod real_causal;
pub mod report;

pub use error::{Error, Result};
pub use field::{
    BlockDiagonalMatrix, DenseMatrix, Field, FieldKind, IndexPermutation, OpCounter,
};
pub use monarch::{
    coeffs_to_factors, flop_count, monarch_dft, monarch_idft, CoefficientMatrices, FlopOp,
    MonarchFactorization, Recipe,
};
pub use num_complex::Complex64;
