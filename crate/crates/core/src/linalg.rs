//! Symmetric-matrix kernels: eigendecomposition, inverse square roots,
//! log-determinants and numerical rank.
//!
//! Every symmetric input is symmetrized as `(S + Sᵀ)/2` before it is
//! decomposed, so asymmetry that accumulates over many flow iterations never
//! reaches the eigensolver. The eigensolver is cyclic Jacobi, which is slow for
//! large matrices but accurate to a few ulps for the small ones handled here.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

const MAX_JACOBI_SWEEPS: usize = 100;

/// Eigendecomposition `S = Q Λ Qᵀ` of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymEig<T> {
    /// Eigenvalues in ascending order.
    pub eigenvalues: Vec<T>,
    /// Orthogonal matrix whose columns are the matching eigenvectors.
    pub eigenvectors: Matrix<T>,
}

impl<T: Scalar> SymEig<T> {
    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues.first().copied().unwrap_or_else(T::infinity)
    }

    pub fn max_eigenvalue(&self) -> T {
        self.eigenvalues.last().copied().unwrap_or_else(T::neg_infinity)
    }

    /// `Q f(Λ) Qᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        let q = &self.eigenvectors;
        let n = self.eigenvalues.len();
        let fl: Vec<T> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = T::zero();
                for k in 0..n {
                    s += q[(i, k)] * fl[k] * q[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    pub fn reconstruct(&self) -> Matrix<T> {
        self.map_spectrum(|l| l)
    }

    fn require_above(&self, floor: T) -> Result<()> {
        let lmin = self.min_eigenvalue();
        if lmin.is_nan() || lmin <= floor {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: lmin.as_f64(),
            });
        }
        Ok(())
    }

    /// `Σ log λ_i`; fails unless every eigenvalue is strictly positive.
    pub fn log_det(&self) -> Result<T> {
        self.require_above(T::zero())?;
        Ok(self.eigenvalues.iter().map(|l| l.ln()).sum())
    }

    /// `Q Λ^{-1/2} Qᵀ`; fails when the smallest eigenvalue is at or below `floor`.
    pub fn inv_sqrt(&self, floor: T) -> Result<Matrix<T>> {
        self.require_above(floor)?;
        Ok(self.map_spectrum(|l| l.sqrt().recip()))
    }

    /// `Q Λ^{1/2} Qᵀ`.
    pub fn sqrt(&self, floor: T) -> Result<Matrix<T>> {
        self.require_above(floor)?;
        Ok(self.map_spectrum(|l| l.sqrt()))
    }

    /// `Q Λ^{-1} Qᵀ`.
    pub fn inverse(&self, floor: T) -> Result<Matrix<T>> {
        self.require_above(floor)?;
        Ok(self.map_spectrum(|l| l.recip()))
    }
}

/// Scale-relative singularity floor `1e-12 · tr(S)/n`, never below the
/// smallest positive normal number.
pub fn eigen_floor<T: Scalar>(s: &Matrix<T>) -> T {
    let n = T::from_usize(s.rows().max(1));
    (T::lit(1e-12) * s.trace() / n).max(T::min_positive_value())
}

/// Eigendecomposition of the symmetric part of `s` by cyclic Jacobi rotations.
pub fn sym_eig<T: Scalar>(s: &Matrix<T>) -> Result<SymEig<T>> {
    if !s.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "sym_eig needs a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    if !s.is_finite() {
        return Err(Error::NonFinite);
    }
    let n = s.rows();
    let mut a = s.symmetrize();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm();

    if scale > T::zero() {
        for _ in 0..MAX_JACOBI_SWEEPS {
            let mut off = T::zero();
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[(p, q)] * a[(p, q)];
                }
            }
            if off.sqrt() <= T::epsilon() * scale * T::lit(1e-3) {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq == T::zero() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (apq + apq);
                    let t = theta.signum() / (theta.abs() + theta.hypot(T::one()));
                    let c = (t * t + T::one()).sqrt().recip();
                    let sn = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - sn * akq;
                        a[(k, q)] = sn * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - sn * aqk;
                        a[(q, k)] = sn * apk + c * aqk;
                    }
                    a[(p, q)] = T::zero();
                    a[(q, p)] = T::zero();
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - sn * vkq;
                        v[(k, q)] = sn * vkp + c * vkq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).expect("finite eigenvalues"));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let eigenvectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

/// Symmetric `P = S^{-1/2}` so that `P S P = I`.
pub fn inv_sqrt_pd<T: Scalar>(s: &Matrix<T>, floor: T) -> Result<Matrix<T>> {
    sym_eig(s)?.inv_sqrt(floor)
}

/// Symmetric positive square root.
pub fn sqrt_pd<T: Scalar>(s: &Matrix<T>, floor: T) -> Result<Matrix<T>> {
    sym_eig(s)?.sqrt(floor)
}

/// Log-determinant of a symmetric positive definite matrix, summed over
/// eigenvalues so that it neither under- nor overflows.
pub fn log_det_pd<T: Scalar>(s: &Matrix<T>) -> Result<T> {
    sym_eig(s)?.log_det()
}

/// Singular values in descending order, via one-sided Jacobi.
pub fn singular_values<T: Scalar>(b: &Matrix<T>) -> Result<Vec<T>> {
    if !b.is_finite() {
        return Err(Error::NonFinite);
    }
    // Work on the columns of a tall matrix.
    let w = if b.rows() >= b.cols() {
        b.clone()
    } else {
        b.transpose()
    };
    let (rows, cols) = w.shape();
    let mut col: Vec<Vec<T>> = (0..cols)
        .map(|j| (0..rows).map(|i| w[(i, j)]).collect())
        .collect();
    let dot = |x: &[T], y: &[T]| x.iter().zip(y).fold(T::zero(), |s, (&a, &b)| s + a * b);

    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha = dot(&col[p], &col[p]);
                let beta = dot(&col[q], &col[q]);
                let gamma = dot(&col[p], &col[q]);
                if gamma == T::zero() || gamma.abs() <= T::epsilon() * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(T::one()));
                let c = (t * t + T::one()).sqrt().recip();
                let s = t * c;
                for i in 0..rows {
                    let xp = col[p][i];
                    let xq = col[q][i];
                    col[p][i] = c * xp - s * xq;
                    col[q][i] = s * xp + c * xq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<T> = col.iter().map(|c| dot(c, c).sqrt()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    Ok(sv)
}

/// Number of singular values above `max(rows, cols) · ε · σ_max`.
pub fn numerical_rank<T: Scalar>(b: &Matrix<T>) -> Result<usize> {
    let sv = singular_values(b)?;
    let smax = sv.first().copied().unwrap_or_else(T::zero);
    if smax == T::zero() {
        return Ok(0);
    }
    let tol = T::from_usize(b.rows().max(b.cols())) * T::epsilon() * smax;
    Ok(sv.iter().filter(|&&s| s > tol).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_orthogonal, random_spd, seeded};
    use approx::assert_abs_diff_eq;

    fn diag(d: &[f64]) -> Matrix<f64> {
        Matrix::from_diagonal(d)
    }

    /// Cofactor expansion; exponential cost, fine for n ≤ 4.
    fn cofactor_det(m: &Matrix<f64>) -> f64 {
        let n = m.rows();
        if n == 1 {
            return m[(0, 0)];
        }
        (0..n)
            .map(|j| {
                let minor = Matrix::from_fn(n - 1, n - 1, |r, c| {
                    m[(r + 1, if c < j { c } else { c + 1 })]
                });
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[(0, j)] * cofactor_det(&minor)
            })
            .sum()
    }

    #[test]
    fn identity_spectrum() {
        let e = sym_eig(&Matrix::<f64>::identity(3)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_spectrum_and_vectors() {
        let e = sym_eig(&diag(&[9.0, 4.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![4.0, 9.0]);
        // Columns are the coordinate axes, reordered to match.
        assert_eq!(e.eigenvectors[(1, 0)].abs(), 1.0);
        assert_eq!(e.eigenvectors[(0, 1)].abs(), 1.0);
        let e = sym_eig(&diag(&[4.0, 9.0])).unwrap();
        assert_eq!(e.eigenvectors, Matrix::identity(2));
    }

    #[test]
    fn random_symmetric_reconstruction() {
        let mut rng = seeded(11);
        for n in 1..=8 {
            let g = crate::random::gaussian_matrix::<f64, _>(&mut rng, n, n);
            let s = &g + &g.transpose();
            let e = sym_eig(&s).unwrap();
            let err = (&e.reconstruct() - &s).frobenius_norm();
            assert!(err <= 1e-10 * (1.0 + s.frobenius_norm()), "n={n} err={err}");
            let q = &e.eigenvectors;
            let orth = (&(&q.transpose() * q) - &Matrix::identity(n)).max_abs();
            assert!(orth < 1e-10);
            assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn non_finite_rejected() {
        let mut s = Matrix::<f64>::identity(2);
        s[(0, 1)] = f64::NAN;
        assert!(matches!(sym_eig(&s), Err(Error::NonFinite)));
    }

    #[test]
    fn inverse_square_root_examples() {
        let floor = 1e-300;
        assert_eq!(inv_sqrt_pd(&Matrix::<f64>::identity(4), floor).unwrap(), Matrix::identity(4));
        let p = inv_sqrt_pd(&diag(&[4.0, 9.0]), floor).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p[(1, 1)], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[(0, 1)], 0.0, epsilon = 1e-15);

        let mut rng = seeded(3);
        for n in 1..=6 {
            let s = random_spd::<f64, _>(&mut rng, n, 2.0);
            let p = inv_sqrt_pd(&s, eigen_floor(&s)).unwrap();
            let psp = &(&p * &s) * &p;
            assert!((&psp - &Matrix::identity(n)).max_abs() < 1e-8);
            assert!(p.asymmetry() < 1e-12);
        }
    }

    #[test]
    fn inverse_square_root_rejects_singular() {
        let s = diag(&[1.0, 0.0]);
        match inv_sqrt_pd(&s, eigen_floor(&s)) {
            Err(Error::NotPositiveDefinite { min_eigenvalue }) => assert_eq!(min_eigenvalue, 0.0),
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn log_det_examples() {
        assert_eq!(log_det_pd(&Matrix::<f64>::identity(5)).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(log_det_pd(&diag(&[e, e])).unwrap(), 2.0, epsilon = 1e-15);
        assert!(log_det_pd(&diag(&[1.0, -1.0])).is_err());

        let mut rng = seeded(5);
        for n in 1..=4 {
            for _ in 0..10 {
                let s = random_spd::<f64, _>(&mut rng, n, 1.5);
                let expected = cofactor_det(&s).ln();
                assert_abs_diff_eq!(log_det_pd(&s).unwrap(), expected, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn singular_values_and_rank() {
        let mut rng = seeded(9);
        let q = random_orthogonal::<f64, _>(&mut rng, 4);
        let d = diag(&[3.0, 2.0, 1.0, 0.0]);
        let a = &(&q * &d) * &q.transpose();
        let sv = singular_values(&a).unwrap();
        assert_abs_diff_eq!(sv[0], 3.0, epsilon = 1e-13);
        assert_abs_diff_eq!(sv[2], 1.0, epsilon = 1e-13);
        assert!(sv[3] < 1e-14);
        assert_eq!(numerical_rank(&a).unwrap(), 3);
        assert_eq!(numerical_rank(&Matrix::<f64>::zeros(2, 3)).unwrap(), 0);
        let wide = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(numerical_rank(&wide).unwrap(), 2);
    }

    #[test]
    fn works_in_single_precision() {
        let s = Matrix::<f32>::from_diagonal(&[4.0, 9.0]);
        let p = inv_sqrt_pd(&s, eigen_floor(&s)).unwrap();
        assert!((p[(1, 1)] - 1.0 / 3.0).abs() < 1e-6);
    }
}
