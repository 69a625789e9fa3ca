//! Seeded property suites run by `bench verify`.

use anyhow::Result;
use m2_core::causal::{
    build_causal_operator, causality_jacobian_check, mask_random_coefficients, random_signal,
    unmasked_random_coefficients, CausalMonarchOperator,
};
use m2_core::field::{max_abs_diff, omega, DenseMatrix, Field};
use m2_core::monarch::{coeffs_to_factors, monarch_dft, monarch_dft_order, monarch_idft};
use m2_core::multivar::{ConvOutput, MultiIndex, MultivarCausalOperator, MultivarMonarch};
use m2_core::oracle::naive_dft;
use m2_core::real_causal::{block_sc_build, chebyshev_transform_build, real_causal_conv, sc_random_coefficients};
use m2_core::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Suite;

/// One named check: observed value against its bound.
struct Check {
    name: String,
    value: f64,
    ok: bool,
}

fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Check {
    Check { name: name.into(), value, ok: value <= bound }
}

fn real_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

fn causal(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for n in [8, 18, 32] {
        let mut worst = 0.0f64;
        for t in 0..4 {
            let s = seed.wrapping_mul(31).wrapping_add(t);
            let op = build_causal_operator(n, &mask_random_coefficients(n, s)?)?;
            let k = random_signal(&mut ChaCha8Rng::seed_from_u64(s), n);
            worst = worst.max(causality_jacobian_check(&op, &k, 1, s)?.max_leakage);
        }
        out.push(at_most(format!("masked leakage, n = {n}"), worst, 1e-9));
    }
    let m = coeffs_to_factors(&unmasked_random_coefficients(8, seed)?)?;
    let control = CausalMonarchOperator::from_factorization(8, m)?;
    let k = random_signal(&mut ChaCha8Rng::seed_from_u64(seed), 8);
    let leak = causality_jacobian_check(&control, &k, 1, seed)?.max_leakage;
    out.push(Check { name: "unmasked control leaks".into(), value: leak, ok: leak > 1e-6 });
    Ok(out)
}

fn dft(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for n in [4, 16, 64, 256] {
        let v: Vec<Complex64> = (0..n).map(|_| Complex64::sample(&mut rng)).collect();
        let f = monarch_dft(n)?.matvec(&v)?;
        out.push(at_most(format!("DFT vs naive, N = {n}"), max_abs_diff(&f, &naive_dft(&v)), 1e-9));
        let back = monarch_idft(n)?.matvec(&f)?;
        out.push(at_most(format!("IDFT round trip, N = {n}"), max_abs_diff(&back, &v), 1e-9));
    }
    let m = monarch_dft(64)?.materialize()?;
    let direct = DenseMatrix::from_fn(64, 64, |i, j| omega(64, (i * j) % 64));
    out.push(at_most("materialized DFT, N = 64", m.max_abs_diff(&direct), 1e-10));
    let v: Vec<Complex64> = (0..8).map(|_| Complex64::sample(&mut rng)).collect();
    let f = monarch_dft_order(8, 3)?.matvec(&v)?;
    out.push(at_most("order-3 DFT, N = 8", max_abs_diff(&f, &naive_dft(&v)), 1e-9));
    Ok(out)
}

fn real(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (n, big_n) in [(4, 16), (8, 16), (8, 25), (12, 25)] {
        let (l, r) = sc_random_coefficients(big_n, seed)?;
        let op = block_sc_build(l, r)?;
        let (k, u) = (real_vec(&mut rng, n), real_vec(&mut rng, n));
        let base = real_causal_conv(&op, &k, &u)?;
        let mut worst = 0.0f64;
        for j in 0..n {
            let mut up = u.clone();
            up[j] += 1e-3;
            let y = real_causal_conv(&op, &k, &up)?;
            for i in 0..j {
                worst = worst.max((y[i] - base[i]).abs() / 1e-3);
            }
        }
        out.push(at_most(format!("real leakage, n = {n}, N = {big_n}"), worst, 1e-9));
    }
    for n in [2, 4, 16, 64] {
        let c = chebyshev_transform_build(n);
        let y = real_vec(&mut rng, n);
        let back = c.matvec(&c.inverse_matvec(&y)?)?;
        out.push(at_most(format!("Chebyshev round trip, N = {n}"), max_abs_diff(&back, &y), 1e-9));
    }
    Ok(out)
}

fn multivar(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (b, p) in [(2usize, 3usize), (4, 2), (4, 3)] {
        let axis: Vec<DenseMatrix<f64>> = (0..p)
            .map(|_| {
                DenseMatrix::from_fn(b, b, |m, j| match (m + j).cmp(&(b - 1)) {
                    std::cmp::Ordering::Less => rng.gen_range(-1.0..=1.0),
                    std::cmp::Ordering::Equal => 1.5,
                    std::cmp::Ordering::Greater => 0.0,
                })
            })
            .collect();
        let op = MultivarCausalOperator::new(MultivarMonarch::from_axis_coefficients(&axis)?)?;
        let len = op.input_len();
        let (k, u) = (real_vec(&mut rng, len), real_vec(&mut rng, len));
        let base = op.conv(&k, &u, ConvOutput::Full)?;
        let mut worst = 0.0f64;
        for t in 0..len {
            let td = MultiIndex::unflatten(t, b / 2, p);
            let mut up = u.clone();
            up[t] += 1e-3;
            let y = op.conv(&k, &up, ConvOutput::Full)?;
            for (m, (&y1, &y0)) in y.iter().zip(&base).enumerate() {
                if MultiIndex::unflatten(m, b, p) <= td {
                    worst = worst.max((y1 - y0).abs() / 1e-3);
                }
            }
        }
        out.push(at_most(format!("lexicographic leakage, b = {b}, p = {p}"), worst, 1e-9));
    }
    Ok(out)
}

/// Runs the suite, printing one line per check; returns whether all passed.
pub fn run(suite: Suite, seed: u64) -> Result<bool> {
    let suites: Vec<(&str, fn(u64) -> Result<Vec<Check>>)> = vec![
        ("causal", causal),
        ("dft", dft),
        ("real", real),
        ("multivar", multivar),
    ];
    let wanted = |name: &str| match suite {
        Suite::All => true,
        Suite::Causal => name == "causal",
        Suite::Dft => name == "dft",
        Suite::Real => name == "real",
        Suite::Multivar => name == "multivar",
    };
    let mut all_ok = true;
    for (name, f) in suites.into_iter().filter(|(n, _)| wanted(n)) {
        for c in f(seed)? {
            all_ok &= c.ok;
            println!("{} [{name}] {}: {:.3e}", if c.ok { "PASS" } else { "FAIL" }, c.name, c.value);
        }
    }
    Ok(all_ok)
}
