//! Seeded random matrices for generators and property tests.
//!
//! The generator is SplitMix64 (64-bit state, one multiply-xorshift mix per
//! output), so a given seed reproduces the same data on every platform up to
//! floating-point reassociation in downstream arithmetic.

use rand::Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use rand_xoshiro::SplitMix64;

use crate::datum::Equivalence;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub type SeededRng = SplitMix64;

pub fn seeded(seed: u64) -> SeededRng {
    SplitMix64::seed_from_u64(seed)
}

/// Matrix with independent standard normal entries.
pub fn gaussian_matrix<T: Scalar, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        T::lit(z)
    })
}

/// Haar-distributed orthogonal matrix (Gram-Schmidt on a gaussian matrix,
/// with a second re-orthogonalisation pass).
pub fn random_orthogonal<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix<T> {
    let g = gaussian_matrix::<f64, _>(rng, n, n);
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| g[(i, j)]).collect()).collect();
    for j in 0..n {
        for _pass in 0..2 {
            for k in 0..j {
                let d: f64 = cols[j].iter().zip(&cols[k]).map(|(a, b)| a * b).sum();
                for i in 0..n {
                    cols[j][i] -= d * cols[k][i];
                }
            }
        }
        let norm = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut cols[j] {
            *x /= norm;
        }
    }
    Matrix::from_fn(n, n, |i, j| T::lit(cols[j][i]))
}

/// Random symmetric positive definite matrix `Q diag(exp(spread·u)) Qᵀ` with
/// `u` uniform on `[-1, 1]`; its condition number is at most `exp(2·spread)`.
pub fn random_spd<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize, spread: f64) -> Matrix<T> {
    let q = random_orthogonal::<f64, _>(rng, n);
    let d: Vec<f64> = (0..n)
        .map(|_| (spread * rng.random_range(-1.0..=1.0)).exp())
        .collect();
    let s = &(&q * &Matrix::from_diagonal(&d)) * &q.transpose();
    s.symmetrize().cast()
}

/// Random invertible matrix `U diag(σ) V` with singular values in
/// `[scale, scale·max_condition]`, where `scale` is log-uniform on
/// `[1/2, 2]`.
pub fn random_well_conditioned<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    max_condition: f64,
) -> Matrix<T> {
    assert!(max_condition >= 1.0, "condition bound must be at least 1");
    let u = random_orthogonal::<f64, _>(rng, n);
    let v = random_orthogonal::<f64, _>(rng, n);
    let scale = (rng.random_range(-1.0..=1.0) * std::f64::consts::LN_2).exp();
    let sigma: Vec<f64> = (0..n)
        .map(|_| scale * (rng.random_range(0.0..=1.0) * max_condition.ln()).exp())
        .collect();
    (&(&u * &Matrix::from_diagonal(&sigma)) * &v).cast()
}

/// Random intertwiners `(T, T_1..T_m)` with every condition number at most
/// `max_condition`.
pub fn random_equivalence<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    dims: &[usize],
    max_condition: f64,
) -> Equivalence<T> {
    let t = random_well_conditioned(rng, n, max_condition);
    let t_js = dims
        .iter()
        .map(|&d| random_well_conditioned(rng, d, max_condition))
        .collect();
    Equivalence::new(t, t_js).expect("well-conditioned intertwiners are invertible")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::singular_values;

    #[test]
    fn same_seed_same_stream() {
        let a = gaussian_matrix::<f64, _>(&mut seeded(42), 3, 3);
        let b = gaussian_matrix::<f64, _>(&mut seeded(42), 3, 3);
        let c = gaussian_matrix::<f64, _>(&mut seeded(43), 3, 3);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn orthogonal_is_orthogonal() {
        let q = random_orthogonal::<f64, _>(&mut seeded(1), 6);
        let err = (&(&q.transpose() * &q) - &Matrix::identity(6)).max_abs();
        assert!(err < 1e-14);
    }

    #[test]
    fn conditioning_is_bounded() {
        let mut rng = seeded(2);
        for n in 1..6 {
            let t = random_well_conditioned::<f64, _>(&mut rng, n, 10.0);
            let sv = singular_values(&t).unwrap();
            assert!(sv[0] / sv[n - 1] <= 10.0 + 1e-9);
        }
    }
}
