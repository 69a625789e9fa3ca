//! The M2 mixer layer with fixed (seeded) weights.
//!
//! Sequence mixing runs column-wise over channels,
//! `X̃ = M₂(K₁ ⊙ M₁X)`, either with a Monarch pair (typically DFT/IDFT, with
//! `K₁` in frequency space) or with the causal Monarch convolution. Dimension
//! mixing runs row-wise over tokens, `Yᵀ = M₄·σ(M₃·X̃ᵀ)`. The layer output is
//! `layernorm(Y + X̃)`.
//!
//! Activations are real. The complex sequence mixers return their real part.

use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causal::{build_causal_operator, complexify, mask_random_coefficients, CausalMonarchOperator};
use crate::error::{invalid, Error, Result};
use crate::field::{exact_sqrt, hadamard, DenseMatrix, Field, FieldKind, OpCounter};
use crate::monarch::{
    flop_count, monarch_dft_order, monarch_idft_order, smallest_order, FlopOp, MonarchFactorization,
};
use crate::multivar::ConvOutput;

/// Variance guard inside the layernorm square root.
pub const LAYERNORM_EPS: f64 = 1e-5;

/// `N×d` real activations (row = token, column = channel).
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTensor {
    data: DenseMatrix<f64>,
}

impl ActivationTensor {
    pub fn new(data: DenseMatrix<f64>) -> Result<Self> {
        if data.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(invalid("activations must be finite"));
        }
        Ok(Self { data })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            data: DenseMatrix::zeros(n, d),
        }
    }

    pub fn from_fn(n: usize, d: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        Self {
            data: DenseMatrix::from_fn(n, d, f),
        }
    }

    pub fn random(n: usize, d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_fn(n, d, |_, _| f64::sample(&mut rng))
    }

    fn from_columns(n: usize, cols: &[Vec<f64>]) -> Result<Self> {
        Self::new(DenseMatrix::from_columns(n, cols)?)
    }

    fn from_rows(d: usize, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.iter().any(|r| r.len() != d) {
            return Err(invalid("row length mismatch"));
        }
        Self::new(DenseMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
    }

    /// Sequence length.
    pub fn n(&self) -> usize {
        self.data.rows()
    }

    /// Channels.
    pub fn d(&self) -> usize {
        self.data.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data.get(i, j)
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data.set(i, j, v)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.data.row(i)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.column(j)
    }

    pub fn matrix(&self) -> &DenseMatrix<f64> {
        &self.data
    }

    /// `X·W` for a `d×d'` weight.
    pub fn project(&self, w: &DenseMatrix<f64>, counter: Option<&OpCounter>) -> Result<Self> {
        if let Some(c) = counter {
            c.add_macs(FieldKind::Real, (self.n() * w.rows() * w.cols()) as u64);
        }
        Self::new(self.data.matmul(w)?)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.n() != other.n() || self.d() != other.d() {
            return Err(invalid("activation shapes differ"));
        }
        Self::new(DenseMatrix::from_fn(self.n(), self.d(), |i, j| {
            f(self.get(i, j), other.get(i, j))
        }))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.max_abs_diff(&other.data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Relu,
    /// tanh approximation.
    Gelu,
    None,
}

impl Nonlinearity {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::Gelu => {
                let c = (2.0 / std::f64::consts::PI).sqrt();
                0.5 * x * (1.0 + (c * (x + 0.044715 * x.powi(3))).tanh())
            }
            Nonlinearity::None => x,
        }
    }
}

/// The sequence-axis mixer.
#[derive(Debug, Clone)]
pub enum SequenceMixer {
    /// `M₂(K₁ ⊙ M₁x)` per channel; `k1` is `N×d`, in the `M₁` domain.
    Monarch {
        m1: MonarchFactorization<Complex64>,
        m2: MonarchFactorization<Complex64>,
        k1: DenseMatrix<Complex64>,
    },
    /// Causal Monarch convolution per channel; `kernels` is `n×d` in the
    /// time domain.
    Causal {
        op: CausalMonarchOperator,
        kernels: DenseMatrix<f64>,
    },
}

/// Fixed `d×d` projections for the gated variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Gating {
    pub wq: DenseMatrix<f64>,
    pub wk: DenseMatrix<f64>,
    pub wv: DenseMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct M2LayerConfig {
    pub seq: SequenceMixer,
    pub m3: MonarchFactorization<f64>,
    pub m4: MonarchFactorization<f64>,
    pub sigma: Nonlinearity,
    pub gating: Option<Gating>,
}

/// Serializable description from which a layer is rebuilt deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub n: usize,
    pub d: usize,
    pub sigma: Nonlinearity,
    pub gated: bool,
    pub causal: bool,
    pub seed: u64,
}

fn random_dense(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(r, c, |_, _| f64::sample(rng))
}

impl M2LayerConfig {
    /// Builds seeded weights for `spec`. The non-causal mixer is the
    /// DFT/IDFT pair of the smallest order `p ≥ 2` with `N = b^p`, with `K₁`
    /// the spectrum of random time-domain kernels.
    pub fn from_spec(spec: &LayerSpec) -> Result<Self> {
        let LayerSpec { n, d, sigma, gated, causal, seed } = *spec;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if exact_sqrt(d).is_none() {
            return Err(invalid(format!("model dimension d = {d} must be a perfect square")));
        }
        let kernels = random_dense(&mut rng, n, d);
        let seq = if causal {
            let op = build_causal_operator(n, &mask_random_coefficients(n, seed)?)?;
            SequenceMixer::Causal { op, kernels }
        } else {
            let p = smallest_order(n)
                .ok_or_else(|| invalid(format!("sequence length N = {n} is not a perfect power")))?;
            SequenceMixer::Monarch {
                m1: monarch_dft_order(n, p)?,
                m2: monarch_idft_order(n, p)?,
                k1: kernels_to_frequency(&kernels)?,
            }
        };
        let m3 = MonarchFactorization::random(d, 2, &mut rng)?;
        let m4 = MonarchFactorization::random(d, 2, &mut rng)?;
        let gating = gated.then(|| Gating {
            wq: random_dense(&mut rng, d, d),
            wk: random_dense(&mut rng, d, d),
            wv: random_dense(&mut rng, d, d),
        });
        Ok(Self { seq, m3, m4, sigma, gating })
    }

    pub fn n(&self) -> usize {
        match &self.seq {
            SequenceMixer::Monarch { k1, .. } => k1.rows(),
            SequenceMixer::Causal { op, .. } => op.n(),
        }
    }

    pub fn d(&self) -> usize {
        self.m3.n()
    }

    pub fn is_causal(&self) -> bool {
        matches!(self.seq, SequenceMixer::Causal { .. })
    }

    fn check_input(&self, x: &ActivationTensor) -> Result<()> {
        if x.n() != self.n() || x.d() != self.d() {
            return Err(invalid(format!(
                "expected {}x{} activations, got {}x{}",
                self.n(),
                self.d(),
                x.n(),
                x.d()
            )));
        }
        Ok(())
    }

    /// Writes the Monarch weights as binary blobs next to `spec.json`.
    pub fn save(&self, spec: &LayerSpec, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::Format(e.to_string()))?;
        let json = serde_json::to_string_pretty(spec).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(dir.join("spec.json"), json).map_err(|e| Error::Format(e.to_string()))?;
        self.m3.save(dir.join("m3.mnr"))?;
        self.m4.save(dir.join("m4.mnr"))?;
        match &self.seq {
            SequenceMixer::Monarch { m1, m2, .. } => {
                m1.save(dir.join("m1.mnr"))?;
                m2.save(dir.join("m2.mnr"))
            }
            SequenceMixer::Causal { op, .. } => op.monarch().save(dir.join("m1.mnr")),
        }
    }

    /// Reads `spec.json` and rebuilds the layer from it.
    pub fn load_spec(dir: impl AsRef<Path>) -> Result<LayerSpec> {
        let text = std::fs::read_to_string(dir.as_ref().join("spec.json"))
            .map_err(|e| Error::Format(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Time-domain kernels (`N×d`) to the frequency domain via the Monarch DFT.
pub fn kernels_to_frequency(kernels: &DenseMatrix<f64>) -> Result<DenseMatrix<Complex64>> {
    let n = kernels.rows();
    let p = smallest_order(n).ok_or_else(|| invalid(format!("N = {n} is not a perfect power")))?;
    let f = monarch_dft_order(n, p)?;
    let cols = (0..kernels.cols())
        .map(|c| f.matvec(&complexify(&kernels.column(c))))
        .collect::<Result<Vec<_>>>()?;
    DenseMatrix::from_columns(kernels.rows(), &cols)
}

fn mix_columns(cfg: &M2LayerConfig, x: &ActivationTensor, counter: Option<&OpCounter>) -> Result<ActivationTensor> {
    cfg.check_input(x)?;
    let cols = (0..x.d())
        .into_par_iter()
        .map(|c| -> Result<Vec<f64>> {
            let col = complexify(&x.column(c));
            let out = match &cfg.seq {
                SequenceMixer::Monarch { m1, m2, k1 } => {
                    let y = m1.matvec_counted(&col, counter)?;
                    m2.matvec_counted(&hadamard(&k1.column(c), &y, counter)?, counter)?
                }
                SequenceMixer::Causal { op, kernels } => op.conv_counted(
                    &complexify(&kernels.column(c)),
                    &col,
                    ConvOutput::Truncated,
                    counter,
                )?,
            };
            Ok(out.iter().map(|z| z.re).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    ActivationTensor::from_columns(x.n(), &cols)
}

/// `X̃ = M₂(K₁ ⊙ M₁X)`, column by column.
pub fn sequence_mix(cfg: &M2LayerConfig, x: &ActivationTensor) -> Result<ActivationTensor> {
    mix_columns(cfg, x, None)
}

fn gated_counted(cfg: &M2LayerConfig, x: &ActivationTensor, counter: Option<&OpCounter>) -> Result<ActivationTensor> {
    let g = cfg
        .gating
        .as_ref()
        .ok_or_else(|| invalid("gated mixing needs Q, K and V projections"))?;
    cfg.check_input(x)?;
    let q = x.project(&g.wq, counter)?;
    let k = x.project(&g.wk, counter)?;
    let v = x.project(&g.wv, counter)?;
    let qk = q.zip_with(&k, |a, b| a * b)?;
    let mixed = mix_columns(cfg, &qk, counter)?;
    if let Some(c) = counter {
        c.add_products(FieldKind::Real, 2 * (x.n() * x.d()) as u64);
    }
    v.zip_with(&mixed, |a, b| a * b)
}

/// `V ⊙ M₂(K₁ ⊙ M₁(Q ⊙ K))` with `Q = X·W_q`, `K = X·W_k`, `V = X·W_v`.
pub fn gated_sequence_mix(cfg: &M2LayerConfig, x: &ActivationTensor) -> Result<ActivationTensor> {
    gated_counted(cfg, x, None)
}

fn dimension_counted(cfg: &M2LayerConfig, xt: &ActivationTensor, counter: Option<&OpCounter>) -> Result<ActivationTensor> {
    cfg.check_input(xt)?;
    let rows = (0..xt.n())
        .into_par_iter()
        .map(|i| {
            let h = cfg.m3.matvec_counted(xt.row(i), counter)?;
            let h: Vec<f64> = h.into_iter().map(|v| cfg.sigma.apply(v)).collect();
            cfg.m4.matvec_counted(&h, counter)
        })
        .collect::<Result<Vec<_>>>()?;
    ActivationTensor::from_rows(xt.d(), &rows)
}

/// `Yᵀ = M₄·σ(M₃·X̃ᵀ)`: each token's channel vector goes through the MLP.
pub fn dimension_mix(cfg: &M2LayerConfig, xt: &ActivationTensor) -> Result<ActivationTensor> {
    dimension_counted(cfg, xt, None)
}

/// Per-token normalization over channels (unit scale, zero shift).
pub fn layernorm(x: &ActivationTensor) -> ActivationTensor {
    let d = x.d() as f64;
    let rows: Vec<Vec<f64>> = (0..x.n())
        .map(|i| {
            let r = x.row(i);
            let mean = r.iter().sum::<f64>() / d;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
            let inv = 1.0 / (var + LAYERNORM_EPS).sqrt();
            r.iter().map(|v| (v - mean) * inv).collect()
        })
        .collect();
    ActivationTensor::from_rows(x.d(), &rows).expect("finite by construction")
}

/// Full layer, with optional operation counting.
pub fn m2_layer_forward_counted(
    cfg: &M2LayerConfig,
    x: &ActivationTensor,
    counter: Option<&OpCounter>,
) -> Result<ActivationTensor> {
    let xt = if cfg.gating.is_some() {
        gated_counted(cfg, x, counter)?
    } else {
        mix_columns(cfg, x, counter)?
    };
    let y = dimension_counted(cfg, &xt, counter)?;
    Ok(layernorm(&y.zip_with(&xt, |a, b| a + b)?))
}

/// `layernorm(Y + X̃)`.
pub fn m2_layer_forward(cfg: &M2LayerConfig, x: &ActivationTensor) -> Result<ActivationTensor> {
    m2_layer_forward_counted(cfg, x, None)
}

/// Real FLOPs of a real order-`p` Monarch matvec: `p·(N/b)·b²` MACs at 2.
pub fn real_matvec_flops(n: usize, p: usize) -> Result<u64> {
    Ok(flop_count(n, p, FlopOp::Matvec)? / 4)
}

/// Closed-form FLOPs of [`m2_layer_forward`], counting multiply-adds and
/// elementwise products of the linear operators only (the nonlinearity,
/// residual and layernorm are not counted):
///
/// * sequence mix, per channel: the causal convolution (`3` matvecs plus
///   `N` products at the padded size), or `M₁`, `M₂` and `N` products;
/// * gating: three `N×d×d` projections and `2·N·d` real products;
/// * dimension mix, per token: two real Monarch matvecs of size `d`.
pub fn layer_flop_count(cfg: &M2LayerConfig) -> Result<u64> {
    let (n, d) = (cfg.n(), cfg.d());
    let seq = match &cfg.seq {
        SequenceMixer::Causal { op, .. } => flop_count(op.padded_n(), 2, FlopOp::Conv)?,
        SequenceMixer::Monarch { m1, .. } => {
            2 * flop_count(m1.n(), m1.p(), FlopOp::Matvec)? + 6 * n as u64
        }
    };
    let gating = if cfg.gating.is_some() {
        (3 * 2 * n * d * d + 2 * n * d) as u64
    } else {
        0
    };
    let dim = 2 * real_matvec_flops(d, cfg.m3.p())?;
    Ok(d as u64 * seq + gating + n as u64 * dim)
}

/// Configuration of the heads layer: projections, one causal operator for
/// all convolutions, three short kernels (`n×d`, one per channel) and one
/// long kernel per head (`n×H`, shared by the head's `d_h×d_h` outer
/// products).
#[derive(Debug, Clone)]
pub struct M2HeadsConfig {
    pub d_h: usize,
    pub w_x1: DenseMatrix<f64>,
    pub w_x2: DenseMatrix<f64>,
    pub w_v: DenseMatrix<f64>,
    pub w_o: DenseMatrix<f64>,
    pub op: CausalMonarchOperator,
    pub short: [DenseMatrix<f64>; 3],
    pub k_long: DenseMatrix<f64>,
}

impl M2HeadsConfig {
    pub fn random(n: usize, d: usize, d_h: usize, seed: u64) -> Result<Self> {
        if d_h == 0 || d % d_h != 0 {
            return Err(invalid(format!("head dimension {d_h} does not divide d = {d}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = build_causal_operator(n, &mask_random_coefficients(n, seed)?)?;
        Ok(Self {
            d_h,
            w_x1: random_dense(&mut rng, d, d),
            w_x2: random_dense(&mut rng, d, d),
            w_v: random_dense(&mut rng, d, d),
            w_o: random_dense(&mut rng, d, d),
            short: [
                random_dense(&mut rng, n, d),
                random_dense(&mut rng, n, d),
                random_dense(&mut rng, n, d),
            ],
            k_long: random_dense(&mut rng, n, d / d_h),
            op,
        })
    }

    pub fn heads(&self) -> usize {
        self.w_o.rows() / self.d_h
    }
}

fn causal_real(op: &CausalMonarchOperator, k: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    Ok(op.conv(&complexify(k), &complexify(u))?.iter().map(|z| z.re).collect())
}

fn short_conv(op: &CausalMonarchOperator, k: &DenseMatrix<f64>, x: &ActivationTensor) -> Result<ActivationTensor> {
    let cols = (0..x.d())
        .into_par_iter()
        .map(|c| causal_real(op, &k.column(c), &x.column(c)))
        .collect::<Result<Vec<_>>>()?;
    ActivationTensor::from_columns(x.n(), &cols)
}

/// Heads layer: projections, short causal convolutions, per-head outer
/// products `X̄₂ᵗ·(V̄ᵗ)ᵀ` convolved along the sequence with the head's long
/// kernel, contraction with `X̄₁ᵗ`, concatenation and output projection.
pub fn m2_heads_forward(cfg: &M2HeadsConfig, u: &ActivationTensor) -> Result<ActivationTensor> {
    let (n, d, dh) = (u.n(), u.d(), cfg.d_h);
    if dh == 0 || d % dh != 0 {
        return Err(invalid(format!("head dimension {dh} does not divide d = {d}")));
    }
    if n != cfg.op.n() || cfg.w_o.rows() != d {
        return Err(invalid("input shape does not match the heads configuration"));
    }
    let x1 = short_conv(&cfg.op, &cfg.short[0], &u.project(&cfg.w_x1, None)?)?;
    let x2 = short_conv(&cfg.op, &cfg.short[1], &u.project(&cfg.w_x2, None)?)?;
    let v = short_conv(&cfg.op, &cfg.short[2], &u.project(&cfg.w_v, None)?)?;
    let mut o = ActivationTensor::zeros(n, d);
    for h in 0..d / dh {
        let base = h * dh;
        let kl = cfg.k_long.column(h);
        // xv[(a, b)] is the sequence X̄₂[:, a]·V̄[:, b] after the long conv.
        let pairs: Vec<(usize, usize)> = (0..dh).flat_map(|a| (0..dh).map(move |b| (a, b))).collect();
        let xv = pairs
            .par_iter()
            .map(|&(a, b)| {
                let seq: Vec<f64> = (0..n).map(|t| x2.get(t, base + a) * v.get(t, base + b)).collect();
                causal_real(&cfg.op, &kl, &seq)
            })
            .collect::<Result<Vec<_>>>()?;
        for t in 0..n {
            for b in 0..dh {
                let s: f64 = (0..dh).map(|a| x1.get(t, base + a) * xv[a * dh + b][t]).sum();
                o.set(t, base + b, s);
            }
        }
    }
    o.project(&cfg.w_o, None)
}
