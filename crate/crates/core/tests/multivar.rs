//! p-variate Monarch matrices and the multivariate causal convolution.

use m2_core::field::{max_abs_diff, unit_vector, DenseMatrix};
use m2_core::multivar::{
    pad_multivar, ConvOutput, MultiIndex, MultivarCausalOperator, MultivarMonarch,
};
use m2_core::oracle::{chebyshev_eval, chebyshev_product_expand, solve_dense};
use m2_core::real_causal::{chebyshev_node, chebyshev_transform_build};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

/// `M'[i, j] = ∏_a ℓ^{(a)}(ω_{b,i_a})`, where factor `a` reads column `j_a`
/// of the block indexed by `(i_0, …, i_{a−1}, j_{p−1}, …, j_{a+1})`.
fn entry_oracle(coeffs: &[DenseMatrix<f64>], b: usize) -> DenseMatrix<f64> {
    let p = coeffs.len();
    let n = b.pow(p as u32);
    DenseMatrix::from_fn(n, n, |i, j| {
        let (id, jd) = (MultiIndex::unflatten(i, b, p).0, MultiIndex::unflatten(j, b, p).0);
        (0..p)
            .map(|a| {
                let mut block: Vec<usize> = id[..a].to_vec();
                block.extend(jd[a + 1..].iter().rev());
                let k = MultiIndex(block).flatten(b);
                let ell: Vec<f64> = (0..b).map(|m| coeffs[a].get(k * b + m, jd[a])).collect();
                chebyshev_eval(&ell, chebyshev_node(b, id[a]))
            })
            .product()
    })
}

fn random_coeffs(b: usize, p: usize, seed: u64) -> Vec<DenseMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = b.pow(p as u32);
    (0..p).map(|_| DenseMatrix::from_fn(n, b, |_, _| rng.gen_range(-1.0..=1.0))).collect()
}

/// Causal axis coefficients: column `j` has degree exactly `b − j − 1`.
fn causal_axis(b: usize, rng: &mut ChaCha8Rng) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(b, b, |m, j| match (m + j).cmp(&(b - 1)) {
        std::cmp::Ordering::Less => rng.gen_range(-1.0..=1.0),
        std::cmp::Ordering::Equal => 1.0 + rng.gen_range(0.0..=1.0),
        std::cmp::Ordering::Greater => 0.0,
    })
}

#[test]
fn matvec_matches_entry_oracle() {
    for (b, p, seed) in [(2, 3, 1), (3, 2, 2), (3, 3, 3), (2, 4, 4), (4, 2, 5)] {
        let coeffs = random_coeffs(b, p, seed);
        let m = MultivarMonarch::build(coeffs.clone()).unwrap();
        let dense = entry_oracle(&coeffs, b);
        assert!(m.materialize().unwrap().max_abs_diff(&dense) <= 1e-12, "b={b} p={p}");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_vec(&mut rng, m.n());
        assert!(max_abs_diff(&m.matvec(&v).unwrap(), &dense.matvec(&v).unwrap()) <= 1e-9);
        for j in 0..m.n() {
            let col = m.matvec(&unit_vector(m.n(), j)).unwrap();
            assert!(max_abs_diff(&col, &dense.column(j)) <= 1e-12, "column {j}");
        }
    }
}

fn kron(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> DenseMatrix<f64> {
    let (br, bc) = (b.rows(), b.cols());
    DenseMatrix::from_fn(a.rows() * br, a.cols() * bc, |i, j| a.get(i / br, j / bc) * b.get(i % br, j % bc))
}

#[test]
fn identity_coefficients_give_kronecker_chebyshev() {
    let (b, p) = (2, 3);
    let m = MultivarMonarch::from_axis_coefficients(&vec![DenseMatrix::identity(b); p]).unwrap();
    let c = chebyshev_transform_build(b);
    let want = kron(&kron(c.matrix(), c.matrix()), c.matrix());
    assert!(m.materialize().unwrap().max_abs_diff(&want) <= 1e-12);

    let (b, p) = (3, 2);
    let m = MultivarMonarch::from_axis_coefficients(&vec![DenseMatrix::identity(b); p]).unwrap();
    let c = chebyshev_transform_build(b);
    assert!(m.materialize().unwrap().max_abs_diff(&kron(c.matrix(), c.matrix())) <= 1e-12);
}

/// Axis coefficients with `ℓ_j = T_{b−j−1}`; basis column `j` is
/// `∏_a T_{b−1−j_a}(X_a)`.
fn monomial_operator(b: usize, p: usize) -> MultivarCausalOperator {
    let axis = DenseMatrix::from_fn(b, b, |m, j| if m + j == b - 1 { 1.0 } else { 0.0 });
    MultivarCausalOperator::new(MultivarMonarch::from_axis_coefficients(&vec![axis; p]).unwrap()).unwrap()
}

/// Symbolic product: expand `K·U` axis by axis with the Chebyshev product
/// identity and read off the coordinate of `∏_a T_{b−1−m_a}`.
fn symbolic_product(b: usize, p: usize, k: &[f64], u: &[f64]) -> Vec<f64> {
    let (h, c) = (b / 2, b.div_ceil(2));
    let n = b.pow(p as u32);
    let mut out = vec![0.0; n];
    let unit = |d: usize| {
        let mut e = vec![0.0; d + 1];
        e[d] = 1.0;
        e
    };
    for (t, &kt) in k.iter().enumerate() {
        for (tp, &ut) in u.iter().enumerate() {
            let (td, tpd) = (MultiIndex::unflatten(t, h, p).0, MultiIndex::unflatten(tp, h, p).0);
            let axes: Vec<Vec<f64>> = (0..p)
                .map(|a| chebyshev_product_expand(&unit(b - 1 - (td[a] + c)), &unit(b - 1 - (tpd[a] + c))))
                .collect();
            for (m, o) in out.iter_mut().enumerate() {
                let md = MultiIndex::unflatten(m, b, p).0;
                let coef: f64 = (0..p)
                    .map(|a| axes[a].get(b - 1 - md[a]).copied().unwrap_or(0.0))
                    .product();
                *o += kt * ut * coef;
            }
        }
    }
    out
}

#[test]
fn monomial_conv_matches_symbolic_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (b, p) in [(4, 2), (2, 3), (6, 2), (4, 3)] {
        let op = monomial_operator(b, p);
        for _ in 0..10 {
            let (k, u) = (random_vec(&mut rng, op.input_len()), random_vec(&mut rng, op.input_len()));
            let got = op.conv(&k, &u, ConvOutput::Full).unwrap();
            assert!(max_abs_diff(&got, &symbolic_product(b, p, &k, &u)) <= 1e-9, "b={b} p={p}");
        }
    }
}

/// Dense route: evaluate with the entry-formula matrix, multiply pointwise,
/// solve the dense system.
#[test]
fn random_causal_conv_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (b, p) in [(4, 2), (2, 3), (4, 3), (6, 2)] {
        let axis: Vec<DenseMatrix<f64>> = (0..p).map(|_| causal_axis(b, &mut rng)).collect();
        let m = MultivarMonarch::from_axis_coefficients(&axis).unwrap();
        let dense = entry_oracle(m.coefficients(), b);
        let op = MultivarCausalOperator::new(m).unwrap();
        let (k, u) = (random_vec(&mut rng, op.input_len()), random_vec(&mut rng, op.input_len()));
        let (pk, pu) = (pad_multivar(&k, b, p).unwrap(), pad_multivar(&u, b, p).unwrap());
        let (ek, eu) = (dense.matvec(&pk).unwrap(), dense.matvec(&pu).unwrap());
        let prod: Vec<f64> = ek.iter().zip(&eu).map(|(x, y)| x * y).collect();
        let want = solve_dense(&dense, &prod).unwrap();
        assert!(max_abs_diff(&op.conv(&k, &u, ConvOutput::Full).unwrap(), &want) <= 1e-9, "b={b} p={p}");
        let full = op.conv(&k, &u, ConvOutput::Full).unwrap();
        let trunc = op.conv(&k, &u, ConvOutput::Truncated).unwrap();
        for (j, &x) in trunc.iter().enumerate() {
            assert_eq!(x, full[MultiIndex::unflatten(j, b / 2, p).flatten(b)]);
        }
    }
}

/// Exhaustive check: input index `t` (in `[0, ⌊b/2⌋)^p`) reaches only
/// outputs `m` with `t_a + 1 ≤ m_a` for every axis, so every `m ≤_lex t`
/// is untouched.
fn assert_causal(b: usize, p: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis: Vec<DenseMatrix<f64>> = (0..p).map(|_| causal_axis(b, &mut rng)).collect();
    let op = MultivarCausalOperator::new(MultivarMonarch::from_axis_coefficients(&axis).unwrap()).unwrap();
    let h = b / 2;
    let k = random_vec(&mut rng, op.input_len());
    for t in 0..op.input_len() {
        let td = MultiIndex::unflatten(t, h, p);
        let f = op.conv(&k, &unit_vector(op.input_len(), t), ConvOutput::Full).unwrap();
        for (m, &x) in f.iter().enumerate() {
            let md = MultiIndex::unflatten(m, b, p);
            let reachable = td.0.iter().zip(&md.0).all(|(&ta, &ma)| ta < ma);
            if md <= td || !reachable {
                assert!(x.abs() <= 1e-9, "b={b} p={p}: input {:?} leaks into {:?}: {x}", td.0, md.0);
            }
        }
    }
}

#[test]
fn lexicographic_causality_exhaustive() {
    assert_causal(2, 3, 8);
    assert_causal(4, 2, 9);
    assert_causal(4, 3, 10);
    assert_causal(6, 2, 11);
}

/// Index `j_a` carries degree `b − 1 − j_a`, so `q_u·q_v` stays inside the
/// degree budget when `u_a + v_a ≥ b − 1`, and then expands with zero
/// coefficients on every `m` not dominating `u + v − (b − 1)` componentwise.
#[test]
fn basis_products_close_upward() {
    for (b, p, seed) in [(2, 2, 12), (2, 3, 13), (4, 2, 14)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axis: Vec<DenseMatrix<f64>> = (0..p).map(|_| causal_axis(b, &mut rng)).collect();
        let m = MultivarMonarch::from_axis_coefficients(&axis).unwrap();
        let dense = m.materialize().unwrap();
        let n = m.n();
        for uj in 0..n {
            for vj in 0..n {
                let (ud, vd) = (MultiIndex::unflatten(uj, b, p), MultiIndex::unflatten(vj, b, p));
                if ud.0.iter().zip(&vd.0).any(|(x, y)| x + y < b - 1) {
                    continue;
                }
                let floor: Vec<usize> = ud.0.iter().zip(&vd.0).map(|(x, y)| x + y + 1 - b).collect();
                let prod: Vec<f64> = (0..n).map(|i| dense.get(i, uj) * dense.get(i, vj)).collect();
                let alpha = solve_dense(&dense, &prod).unwrap();
                for (mj, &x) in alpha.iter().enumerate() {
                    let md = MultiIndex::unflatten(mj, b, p);
                    if !MultiIndex(floor.clone()).dominated_by(&md) {
                        assert!(x.abs() <= 1e-8, "b={b} p={p} u={:?} v={:?} m={:?}", ud.0, vd.0, md.0);
                    }
                }
            }
        }
    }
}

#[test]
fn non_causal_coefficients_are_rejected() {
    let coeffs = random_coeffs(4, 2, 14);
    assert!(MultivarCausalOperator::new(MultivarMonarch::build(coeffs).unwrap()).is_err());
    let op = monomial_operator(4, 2);
    assert!(op.conv(&[0.0; 4], &[0.0; 3], ConvOutput::Full).is_err());
    assert!(op.conv(&[0.0; 4], &[0.0; 4], ConvOutput::Truncated).unwrap().iter().all(|&x| x == 0.0));
}
