//! FLOP/timing sweeps against a dense baseline and their CSV/JSON reports.
//!
//! Timing methodology: every measurement runs [`WARMUP_RUNS`] untimed
//! iterations, then [`MEASURED_RUNS`] timed ones, and reports the median in
//! milliseconds.
//!
//! JSON schema: an array of objects with keys, in order,
//! `size` (integer), `dense_flops` (integer), `m2_flops` (integer),
//! `ratio` (number, `dense_flops / m2_flops`), `dense_ms` and `m2_ms`
//! (numbers, or `null` when timing was skipped).

use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::{exact_sqrt, hadamard, omega, Field};
use crate::monarch::{dense_flop_count, flop_count, monarch_dft, monarch_idft, FlopOp, MonarchFactorization};

pub const WARMUP_RUNS: usize = 3;
pub const MEASURED_RUNS: usize = 10;

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub size: usize,
    pub dense_flops: u64,
    pub m2_flops: u64,
    pub ratio: f64,
    pub dense_ms: Option<f64>,
    pub m2_ms: Option<f64>,
}

impl SweepRow {
    /// FLOP columns only.
    pub fn flops(size: usize) -> Result<Self> {
        let dense_flops = dense_flop_count(size);
        let m2_flops = flop_count(size, 2, FlopOp::Conv)?;
        Ok(Self {
            size,
            dense_flops,
            m2_flops,
            ratio: dense_flops as f64 / m2_flops as f64,
            dense_ms: None,
            m2_ms: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

pub const CSV_HEADER: &str = "size,dense_flops,m2_flops,ratio,dense_ms,m2_ms";

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Serializes rows in the given order. CSV always starts with the header
/// row; floats use the shortest representation that round-trips.
pub fn emit_report(rows: &[SweepRow], format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.size,
                    r.dense_flops,
                    r.m2_flops,
                    r.ratio,
                    opt(r.dense_ms),
                    opt(r.m2_ms)
                ));
            }
            out.into_bytes()
        }
        ReportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(rows).expect("rows serialize");
            v.push(b'\n');
            v
        }
    }
}

/// Median wall-clock milliseconds of `f` after warmup.
pub fn time_median(mut f: impl FnMut()) -> f64 {
    for _ in 0..WARMUP_RUNS {
        f();
    }
    let mut samples: Vec<f64> = (0..MEASURED_RUNS)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    samples.sort_by(f64::total_cmp);
    let m = samples.len() / 2;
    if samples.len() % 2 == 0 {
        0.5 * (samples[m - 1] + samples[m])
    } else {
        samples[m]
    }
}

/// Dense DFT matvec from a twiddle table: `O(N)` memory, `N²` complex MACs.
#[derive(Debug, Clone)]
pub struct DenseDft {
    twiddle: Vec<Complex64>,
}

impl DenseDft {
    pub fn new(n: usize) -> Self {
        Self {
            twiddle: (0..n).map(|k| omega(n, k)).collect(),
        }
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.twiddle.len();
        (0..n)
            .map(|i| {
                let mut acc = Complex64::new(0.0, 0.0);
                let mut idx = 0usize;
                for &x in v {
                    acc += self.twiddle[idx] * x;
                    idx += i;
                    if idx >= n {
                        idx %= n;
                    }
                }
                acc
            })
            .collect()
    }
}

/// Monarch FFT convolution with a precomputed kernel spectrum.
pub struct MonarchConv {
    f: MonarchFactorization<Complex64>,
    finv: MonarchFactorization<Complex64>,
    k_hat: Vec<Complex64>,
}

impl MonarchConv {
    pub fn new(k: &[Complex64]) -> Result<Self> {
        let f = monarch_dft(k.len())?;
        let k_hat = f.matvec(k)?;
        Ok(Self {
            finv: monarch_idft(k.len())?,
            f,
            k_hat,
        })
    }

    pub fn apply(&self, u: &[Complex64]) -> Result<Vec<Complex64>> {
        self.finv.matvec(&hadamard(&self.k_hat, &self.f.matvec(u)?, None)?)
    }
}

/// FLOP counts and, when `timed`, median timings of the dense DFT matvec
/// and the Monarch convolution at each size.
pub fn sweep(sizes: &[usize], seed: u64, timed: bool) -> Result<Vec<SweepRow>> {
    sizes
        .iter()
        .map(|&n| {
            if exact_sqrt(n).is_none() {
                return Err(invalid(format!("size {n} is not a perfect square")));
            }
            let mut row = SweepRow::flops(n)?;
            if timed {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ n as u64);
                let k: Vec<Complex64> = (0..n).map(|_| Complex64::sample(&mut rng)).collect();
                let u: Vec<Complex64> = (0..n).map(|_| Complex64::sample(&mut rng)).collect();
                let dense = DenseDft::new(n);
                row.dense_ms = Some(time_median(|| {
                    std::hint::black_box(dense.matvec(&u));
                }));
                let conv = MonarchConv::new(&k)?;
                row.m2_ms = Some(time_median(|| {
                    std::hint::black_box(conv.apply(&u).expect("sized"));
                }));
            }
            Ok(row)
        })
        .collect()
}

/// Perfect square nearest to `n` (ties go to the smaller one).
pub fn nearest_square(n: usize) -> usize {
    let r = (n as f64).sqrt().floor() as usize;
    let (lo, hi) = (r * r, (r + 1) * (r + 1));
    if n - lo <= hi - n {
        lo
    } else {
        hi
    }
}
