//! Property tests for the structural invariants.

use m2_core::causal::{build_causal_operator, mask_random_coefficients, random_signal};
use m2_core::field::{
    apply_permutation, block_diag_matvec, materialize_blockdiag, max_abs_diff, omega,
    permutation_sigma, random_block_diagonal, Field, IndexPermutation,
};
use m2_core::monarch::{monarch_dft_order, smallest_order};
use m2_core::multivar::{pad_multivar, subindex_reversal, subindex_reversal_composed, MultiIndex};
use m2_core::oracle::naive_dft;
use m2_core::real_causal::{chebyshev_transform_build, mix, unmix};
use m2_core::{Complex64, MonarchFactorization};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_complex(t: f64) -> Complex64 {
    Complex64::new(t.cos(), t.sin())
}

/// `(b, N)` with `b | N`.
fn divisor_pair() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=8, 1usize..=8).prop_map(|(b, m)| (b, b * m))
}

fn complex_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::sample(rng)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn complex_multiplication_associates(a in 0.0..6.3f64, b in 0.0..6.3f64, c in 0.0..6.3f64) {
        let (x, y, z) = (unit_complex(a), unit_complex(b), unit_complex(c));
        prop_assert!(((x * y) * z - x * (y * z)).norm() <= 1e-12);
    }

    #[test]
    fn roots_of_unity_close(n in 1usize..=4096) {
        let w = omega(n, 1);
        let mut acc = Complex64::new(1.0, 0.0);
        for _ in 0..n {
            acc *= w;
        }
        prop_assert!((acc - 1.0).norm() <= 1e-10);
        prop_assert!((omega(n, n) - 1.0).norm() <= 1e-10);
    }

    #[test]
    fn sigma_is_a_bijection_with_the_stated_map((b, n) in divisor_pair()) {
        let s = permutation_sigma(b, n).unwrap();
        let mut seen = vec![false; n];
        for (i, &d) in s.map().iter().enumerate() {
            prop_assert_eq!(d, (i % b) * (n / b) + i / b);
            prop_assert!(!seen[d]);
            seen[d] = true;
        }
        let back = permutation_sigma(n / b, n).unwrap();
        prop_assert!(s.then(&back).unwrap().is_identity());
        prop_assert_eq!(s.inverse(), back);
    }

    #[test]
    fn permutations_preserve_entries_bitwise((b, n) in divisor_pair(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let out = apply_permutation(&permutation_sigma(b, n).unwrap(), &v).unwrap();
        let mut x: Vec<u64> = v.iter().map(|f| f.to_bits()).collect();
        let mut y: Vec<u64> = out.iter().map(|f| f.to_bits()).collect();
        x.sort_unstable();
        y.sort_unstable();
        prop_assert_eq!(x, y);
    }

    #[test]
    fn block_diagonal_matvec_matches_dense(k in 0usize..4, seed in any::<u64>()) {
        let n = [4, 16, 64, 256][k];
        let b = (n as f64).sqrt() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_block_diagonal::<Complex64, _>(&mut rng, n / b, b, 0.0);
        let v = complex_vec(&mut rng, n);
        let dense = materialize_blockdiag(&m);
        for i in 0..n {
            for j in 0..n {
                if i / b != j / b {
                    prop_assert_eq!(dense.get(i, j), Complex64::new(0.0, 0.0));
                }
            }
        }
        let want = dense.matvec(&v).unwrap();
        let got = block_diag_matvec(&m, &v).unwrap();
        let scale = want.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        prop_assert!(max_abs_diff(&got, &want) <= 1e-10 * scale);
    }

    #[test]
    fn monarch_matvec_is_linear(k in 0usize..3, seed in any::<u64>(), a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let n = [16, 64, 256][k];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = MonarchFactorization::<Complex64>::random(n, 2, &mut rng).unwrap();
        let (u, v) = (complex_vec(&mut rng, n), complex_vec(&mut rng, n));
        let (a, b) = (Complex64::new(a, 0.3), Complex64::new(b, -0.7));
        let comb: Vec<Complex64> = u.iter().zip(&v).map(|(&x, &y)| a * x + b * y).collect();
        let lhs = m.matvec(&comb).unwrap();
        let (mu, mv) = (m.matvec(&u).unwrap(), m.matvec(&v).unwrap());
        let rhs: Vec<Complex64> = mu.iter().zip(&mv).map(|(&x, &y)| a * x + b * y).collect();
        prop_assert!(max_abs_diff(&lhs, &rhs) <= 1e-10 * (n as f64).sqrt());
    }

    #[test]
    fn materialized_columns_are_basis_evaluations(p in 2usize..=3, seed in any::<u64>()) {
        let n = if p == 2 { 16 } else { 27 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = MonarchFactorization::<Complex64>::random(n, p, &mut rng).unwrap();
        let dense = m.materialize().unwrap();
        for j in 0..n {
            prop_assert_eq!(dense.column(j), m.basis_eval(j).unwrap());
        }
    }

    #[test]
    fn serialization_round_trips(p in 1usize..=4, b in 2usize..=4, seed in any::<u64>(), inverse in any::<bool>()) {
        let n = b.pow(p as u32);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = MonarchFactorization::<f64>::random(n, p, &mut rng).unwrap();
        if inverse {
            m = m.inverse().unwrap();
        }
        prop_assert_eq!(MonarchFactorization::<f64>::from_bytes(&m.to_bytes()).unwrap(), m.clone());
        let mc = MonarchFactorization::<Complex64>::random(n, p, &mut rng).unwrap();
        prop_assert_eq!(MonarchFactorization::<Complex64>::from_bytes(&mc.to_bytes()).unwrap(), mc);
    }

    #[test]
    fn order_p_dft_matches_naive(n in 4usize..=300, seed in any::<u64>()) {
        if let Some(p) = smallest_order(n) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = complex_vec(&mut rng, n);
            let got = monarch_dft_order(n, p).unwrap().matvec(&v).unwrap();
            prop_assert!(max_abs_diff(&got, &naive_dft(&v)) <= 1e-9);
        }
    }

    #[test]
    fn chebyshev_inverse_round_trips(n in 1usize..=64, seed in any::<u64>()) {
        let c = chebyshev_transform_build(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = c.matvec(&x).unwrap();
        prop_assert!(max_abs_diff(&c.inverse_matvec(&y).unwrap(), &x) <= 1e-9);
        prop_assert!(max_abs_diff(&c.matvec(&c.inverse_matvec(&x).unwrap()).unwrap(), &x) <= 1e-9);
    }

    #[test]
    fn mix_unmix_round_trip(s in 1usize..=9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..s * s).map(|_| rng.gen()).collect();
        let (u0, u1) = unmix(&u, s).unwrap();
        prop_assert_eq!(mix(&u0, &u1, s).unwrap(), u);
    }

    #[test]
    fn multi_index_flatten_round_trips(b in 1usize..=5, p in 1usize..=4, seed in any::<u64>()) {
        let n = b.pow(p as u32);
        let j = (seed as usize) % n;
        let m = MultiIndex::unflatten(j, b, p);
        prop_assert_eq!(m.flatten(b), j);
        let expect: usize = m.digits().iter().enumerate().map(|(a, &d)| d * b.pow((p - 1 - a) as u32)).sum();
        prop_assert_eq!(expect, j);
        let r = subindex_reversal(b, p).unwrap();
        prop_assert!(r.then(&r).unwrap().is_identity());
        prop_assert_eq!(&r, &subindex_reversal_composed(b, p).unwrap());
    }

    #[test]
    fn multivariate_padding_keeps_entries(b in 2usize..=6, p in 1usize..=3, seed in any::<u64>()) {
        let h = b / 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k: Vec<f64> = (0..h.pow(p as u32)).map(|_| rng.gen_range(0.5..1.5)).collect();
        let padded = pad_multivar(&k, b, p).unwrap();
        prop_assert_eq!(padded.len(), b.pow(p as u32));
        prop_assert_eq!(padded.iter().filter(|&&x| x != 0.0).count(), k.len());
        for (j, &x) in padded.iter().enumerate() {
            if x != 0.0 {
                let d = MultiIndex::unflatten(j, b, p);
                prop_assert!(d.digits().iter().all(|&c| c >= b.div_ceil(2)));
            }
        }
    }

    #[test]
    fn causal_conv_is_causal_for_any_length(n in 1usize..=20, seed in 0u64..1000) {
        let op = build_causal_operator(n, &mask_random_coefficients(n, seed).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k, u) = (random_signal(&mut rng, n), random_signal(&mut rng, n));
        let j = (seed as usize) % n;
        let mut up = u.clone();
        up[j] += Complex64::new(1e-3, 0.0);
        let (y0, y1) = (op.conv(&k, &u).unwrap(), op.conv(&k, &up).unwrap());
        for i in 0..j {
            prop_assert!((y1[i] - y0[i]).norm() / 1e-3 <= 1e-9);
        }
    }

    #[test]
    fn sigma_matches_materialized_product(b in 2usize..=4) {
        let n = b * b;
        let s = IndexPermutation::sigma(b, n).unwrap();
        let dense = s.materialize::<f64>();
        prop_assert_eq!(dense.matmul(&dense).unwrap(), m2_core::DenseMatrix::identity(n));
    }
}
