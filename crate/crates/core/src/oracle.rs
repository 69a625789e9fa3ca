//! Brute-force references. Nothing here shares code with the fast paths; the
//! only dependency is the scalar/matrix plumbing in [`crate::field`].
//!
//! All routines are `O(N²)` or worse and refuse sizes above [`ORACLE_LIMIT`].

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::field::{DenseMatrix, Field};

pub const ORACLE_LIMIT: usize = 4096;

fn guard(n: usize) {
    assert!(n <= ORACLE_LIMIT, "oracle called with N = {n} > {ORACLE_LIMIT}");
}

fn root(n: usize, k: usize) -> Complex64 {
    let angle = 2.0 * PI * ((k % n) as f64) / n as f64;
    Complex64::new(angle.cos(), angle.sin())
}

/// `out[i] = Σ_j ω_N^{ij} v[j]`.
pub fn naive_dft(v: &[Complex64]) -> Vec<Complex64> {
    let n = v.len();
    guard(n);
    (0..n)
        .map(|i| (0..n).map(|j| root(n, i * j) * v[j]).sum())
        .collect()
}

/// `out[i] = (1/N) Σ_j ω_N^{-ij} v[j]`.
pub fn naive_idft(v: &[Complex64]) -> Vec<Complex64> {
    let n = v.len();
    guard(n);
    (0..n)
        .map(|i| (0..n).map(|j| root(n, i * j).conj() * v[j]).sum::<Complex64>() / n as f64)
        .collect()
}

/// `out[i] = Σ_j k[j]·u[(i − j) mod N]`.
pub fn naive_circular_conv<T: Field>(k: &[T], u: &[T]) -> Result<Vec<T>> {
    if k.len() != u.len() {
        return Err(invalid("circular convolution needs equal lengths"));
    }
    let n = k.len();
    guard(n);
    Ok((0..n)
        .map(|i| (0..n).map(|j| k[j] * u[(i + n - j) % n]).sum())
        .collect())
}

/// Polynomial product coefficients; length `len(k) + len(u) − 1`.
pub fn naive_linear_conv<T: Field>(k: &[T], u: &[T]) -> Vec<T> {
    if k.is_empty() || u.is_empty() {
        return Vec::new();
    }
    guard(k.len() + u.len());
    let mut out = vec![T::zero(); k.len() + u.len() - 1];
    for (i, &a) in k.iter().enumerate() {
        for (j, &b) in u.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

/// Horner evaluation of `Σ c[a] z^a`.
pub fn horner<T: Field>(coeffs: &[T], z: T) -> T {
    coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * z + c)
}

/// `T_k(x)` by the three-term recurrence.
pub fn chebyshev_t(k: usize, x: f64) -> f64 {
    let (mut t0, mut t1) = (1.0, x);
    if k == 0 {
        return 1.0;
    }
    for _ in 1..k {
        (t0, t1) = (t1, 2.0 * x * t1 - t0);
    }
    t1
}

/// `Σ c[a] T_a(x)`.
pub fn chebyshev_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().enumerate().map(|(a, &c)| c * chebyshev_t(a, x)).sum()
}

/// Roots of `T_N`: `cos(π(i + ½)/N)`.
pub fn chebyshev_nodes(n: usize) -> Vec<f64> {
    (0..n).map(|i| (PI * (i as f64 + 0.5) / n as f64).cos()).collect()
}

/// Chebyshev-basis product via `2·T_a·T_b = T_{a+b} + T_{|a−b|}`.
pub fn chebyshev_product_expand(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            let h = 0.5 * x * y;
            out[i + j] += h;
            out[i.abs_diff(j)] += h;
        }
    }
    out
}

/// Gaussian elimination with partial pivoting on a copy of `a`.
pub fn solve_dense<T: Field>(a: &DenseMatrix<T>, y: &[T]) -> Result<Vec<T>> {
    let n = a.rows();
    if a.cols() != n || y.len() != n {
        return Err(invalid("solve: system must be square and match the right-hand side"));
    }
    guard(n);
    let scale = a.as_slice().iter().map(|x| x.modulus()).fold(0.0, f64::max);
    let mut m: Vec<Vec<T>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut rhs = y.to_vec();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| m[i][k].modulus().total_cmp(&m[j][k].modulus()))
            .unwrap();
        if !(m[p][k].modulus() > 1e-13 * scale) {
            return Err(Error::SingularSystem(format!("pivot {k} vanishes")));
        }
        m.swap(k, p);
        rhs.swap(k, p);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            if f == T::zero() {
                continue;
            }
            for j in k..n {
                let t = m[k][j];
                m[i][j] -= f * t;
            }
            let t = rhs[k];
            rhs[i] -= f * t;
        }
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let s: T = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (rhs[i] - s) / m[i][i];
    }
    Ok(x)
}

/// Dense inverse, column by column.
pub fn dense_inverse<T: Field>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let n = a.rows();
    let cols = (0..n)
        .map(|j| {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            solve_dense(a, &e)
        })
        .collect::<Result<Vec<_>>>()?;
    DenseMatrix::from_columns(n, &cols)
}

/// Coefficients `c` with `evals · c = y`, where column `j` of `evals` holds
/// the evaluations of basis polynomial `j` over the grid.
pub fn interpolate_basis<T: Field>(evals: &DenseMatrix<T>, y: &[T]) -> Result<Vec<T>> {
    let c = solve_dense(evals, y)?;
    let back = evals.matvec(&c)?;
    let ynorm = y.iter().map(|x| x.modulus()).fold(0.0, f64::max).max(1.0);
    let resid = back
        .iter()
        .zip(y)
        .map(|(&a, &b)| (a - b).modulus())
        .fold(0.0, f64::max);
    if resid > 1e-8 * ynorm {
        return Err(Error::SingularSystem(format!("interpolation residual {resid:e}")));
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn dft_basics() {
        let mut e0 = vec![c(0.0); 8];
        e0[0] = c(1.0);
        assert!(naive_dft(&e0).iter().all(|x| (x - 1.0).norm() < 1e-14));
        let ones = vec![c(1.0); 8];
        let f = naive_dft(&ones);
        assert!((f[0] - 8.0).norm() < 1e-12);
        assert!(f[1..].iter().all(|x| x.norm() < 1e-12));
    }

    #[test]
    fn parseval_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<Complex64> = (0..32).map(|_| Complex64::sample(&mut rng)).collect();
        let f = naive_dft(&v);
        let lhs: f64 = f.iter().map(|x| x.norm_sqr()).sum();
        let rhs: f64 = 32.0 * v.iter().map(|x| x.norm_sqr()).sum::<f64>();
        assert!((lhs - rhs).abs() <= 1e-9 * rhs);
        let back = naive_idft(&f);
        assert!(back.iter().zip(&v).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn circular_conv_cases() {
        let u = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(naive_circular_conv(&[1.0, 0.0, 0.0, 0.0], &u).unwrap(), u.to_vec());
        assert_eq!(
            naive_circular_conv(&[0.0, 1.0, 0.0, 0.0], &u).unwrap(),
            vec![4.0, 1.0, 2.0, 3.0]
        );
        assert!(naive_circular_conv(&[1.0], &u).is_err());
    }

    #[test]
    fn convolution_theorem() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k: Vec<Complex64> = (0..16).map(|_| Complex64::sample(&mut rng)).collect();
        let u: Vec<Complex64> = (0..16).map(|_| Complex64::sample(&mut rng)).collect();
        let prod: Vec<Complex64> = naive_dft(&k).iter().zip(naive_dft(&u)).map(|(a, b)| a * b).collect();
        let via_dft = naive_idft(&prod);
        let direct = naive_circular_conv(&k, &u).unwrap();
        assert!(via_dft.iter().zip(&direct).all(|(a, b)| (a - b).norm() < 1e-9));
    }

    #[test]
    fn linear_conv_cases() {
        assert_eq!(naive_linear_conv(&[1.0, 1.0], &[1.0, 2.0, 3.0]), vec![1.0, 3.0, 5.0, 3.0]);
        assert_eq!(naive_linear_conv(&[1.0], &[4.0, 5.0]), vec![4.0, 5.0]);
        let a = [1.0, -2.0, 0.5];
        let b = [3.0, 0.25];
        assert_eq!(naive_linear_conv(&a, &b), naive_linear_conv(&b, &a));
    }

    #[test]
    fn chebyshev_products() {
        assert_eq!(chebyshev_product_expand(&[0.0, 1.0], &[0.0, 1.0]), vec![0.5, 0.0, 0.5]);
        let p = [0.3, -1.0, 2.0];
        assert_eq!(chebyshev_product_expand(&[1.0], &p), p.to_vec());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ab = chebyshev_product_expand(&a, &b);
        for x in chebyshev_nodes(16) {
            let d = chebyshev_eval(&ab, x) - chebyshev_eval(&a, x) * chebyshev_eval(&b, x);
            assert!(d.abs() <= 1e-10);
        }
    }

    #[test]
    fn monomial_interpolation_is_scaled_conjugate_dft() {
        let n = 16;
        let vander = DenseMatrix::from_fn(n, n, |i, j| root(n, i * j));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y: Vec<Complex64> = (0..n).map(|_| Complex64::sample(&mut rng)).collect();
        let coeffs = interpolate_basis(&vander, &y).unwrap();
        let expect = naive_idft(&y);
        assert!(coeffs.iter().zip(&expect).all(|(a, b)| (a - b).norm() < 1e-10));
        let col3 = vander.column(3);
        let unit = interpolate_basis(&vander, &col3).unwrap();
        for (j, x) in unit.iter().enumerate() {
            assert!((x - if j == 3 { 1.0 } else { 0.0 }).norm() < 1e-10);
        }
    }

    #[test]
    fn interpolation_round_trip_and_singular() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DenseMatrix::from_fn(16, 16, |_, _| Complex64::sample(&mut rng));
        let y: Vec<Complex64> = (0..16).map(|_| Complex64::sample(&mut rng)).collect();
        let coeffs = interpolate_basis(&a, &y).unwrap();
        let back = a.matvec(&coeffs).unwrap();
        assert!(back.iter().zip(&y).all(|(p, q)| (p - q).norm() < 1e-8));
        let sing = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(matches!(interpolate_basis(&sing, &[1.0, 1.0]), Err(Error::SingularSystem(_))));
    }
}
