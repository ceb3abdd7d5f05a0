//! Gaussian lower bounds for the Brascamp–Lieb constant.
//!
//! For centred gaussian inputs `f_j(x) = exp(−π⟨A_jx, x⟩)` the BL functional
//! has the closed form
//!
//! ```text
//! BL(B, c; A)² = Π (det A_j)^{c_j} / det(Σ c_j B_jᵀ A_j B_j)
//! ```
//!
//! and the BL constant is the supremum of this over positive definite `A_j`.
//! Every evaluation is therefore a certified lower bound on `log BL`.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::datum::Datum;
use crate::error::{Error, Result};
use crate::linalg::{eigen_floor, log_det_pd, sym_eig};
use crate::matrix::Matrix;
use crate::random::{random_spd, seeded};
use crate::scalar::Scalar;

/// Log-space box for the rank-one scalar search.
const RANK1_LOG_BOUND: f64 = 12.0;
/// Cap on the number of coarse grid points before falling back to pure
/// coordinate ascent.
const RANK1_MAX_GRID_POINTS: usize = 2_000_000;

/// Positive definite matrices `A_j`, one per map.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaussianInput<T: Scalar> {
    pub a_js: Vec<Matrix<T>>,
}

impl<T: Scalar> GaussianInput<T> {
    pub fn identity(dims: &[usize]) -> Self {
        Self {
            a_js: dims.iter().map(|&d| Matrix::identity(d)).collect(),
        }
    }
}

/// `Σ c_j B_jᵀ A_j B_j`.
fn weighted_gram<T: Scalar>(datum: &Datum<T>, a_js: &[Matrix<T>]) -> Matrix<T> {
    let mut m = Matrix::zeros(datum.n(), datum.n());
    for ((b, c), a) in datum.pairs().zip(a_js) {
        let bab = &(&b.transpose() * a) * b;
        m = &m + &bab.scale(c);
    }
    m.symmetrize()
}

/// `log BL(B, c; A) = ½[Σ c_j log det A_j − log det(Σ c_j B_jᵀA_jB_j)]`.
pub fn gaussian_ratio<T: Scalar>(datum: &Datum<T>, g: &GaussianInput<T>) -> Result<T> {
    if g.a_js.len() != datum.m() {
        return Err(Error::ShapeMismatch(format!(
            "{} gaussian matrices for {} maps",
            g.a_js.len(),
            datum.m()
        )));
    }
    let mut num = T::zero();
    for ((b, c), a) in datum.pairs().zip(&g.a_js) {
        if a.rows() != b.rows() || !a.is_square() {
            return Err(Error::ShapeMismatch(format!(
                "A_j must be {0}x{0}, got {1}x{2}",
                b.rows(),
                a.rows(),
                a.cols()
            )));
        }
        num += c * log_det_pd(a)?;
    }
    let den = log_det_pd(&weighted_gram(datum, &g.a_js))?;
    Ok(T::lit(0.5) * (num - den))
}

/// Result of [`maximize_gaussian`].
#[derive(Clone, Debug, Serialize)]
pub struct GaussianMax<T: Scalar> {
    pub input: GaussianInput<T>,
    /// Best `log BL(B, c; A)` found: a lower bound on `log BL(B, c)`.
    pub log_bl_lower: T,
    pub iterations: usize,
    /// Whether the change in objective fell below the tolerance.
    pub converged: bool,
}

/// Options for [`maximize_gaussian_with`].
#[derive(Clone, Debug)]
pub struct GaussianSearch<T> {
    pub iters: usize,
    pub tol: T,
    /// Extra runs from random positive definite starting points.
    pub restarts: usize,
    pub seed: u64,
}

impl<T: Scalar> Default for GaussianSearch<T> {
    fn default() -> Self {
        Self {
            iters: 10_000,
            tol: T::lit(1e-13),
            restarts: 0,
            seed: 0,
        }
    }
}

/// Fixed-point iteration `A_j ← (B_j M⁻¹ B_jᵀ)⁻¹`, `M = Σ c_j B_jᵀA_jB_j`,
/// started from `A_j = I`.
///
/// The update solves the stationarity condition of the gaussian objective.
/// Iteration stops when the objective changes by less than `tol` or after
/// `iters` updates; the best point seen is returned. No global optimality is
/// claimed.
pub fn maximize_gaussian<T: Scalar>(datum: &Datum<T>, iters: usize, tol: T) -> Result<GaussianMax<T>> {
    maximize_gaussian_with(
        datum,
        &GaussianSearch {
            iters,
            tol,
            ..GaussianSearch::default()
        },
    )
}

pub fn maximize_gaussian_with<T: Scalar>(
    datum: &Datum<T>,
    search: &GaussianSearch<T>,
) -> Result<GaussianMax<T>> {
    let dims = datum.dims();
    let mut best = fixed_point(datum, GaussianInput::identity(&dims), search)?;
    if search.restarts > 0 {
        let mut rng = seeded(search.seed);
        for _ in 0..search.restarts {
            let start = GaussianInput {
                a_js: dims.iter().map(|&d| random_spd(&mut rng, d, 1.0)).collect(),
            };
            // A restart that breaks down does not invalidate the bound already found.
            if let Ok(candidate) = fixed_point(datum, start, search) {
                if candidate.log_bl_lower > best.log_bl_lower {
                    best = candidate;
                }
            }
        }
    }
    Ok(best)
}

fn fixed_point<T: Scalar>(
    datum: &Datum<T>,
    start: GaussianInput<T>,
    search: &GaussianSearch<T>,
) -> Result<GaussianMax<T>> {
    let breakdown = |iteration: usize, err: Error| match err {
        Error::NotPositiveDefinite { min_eigenvalue } => Error::OracleBreakdown {
            iteration,
            min_eigenvalue,
        },
        other => other,
    };

    let mut current = start;
    let mut best_input = current.clone();
    let mut best_value = T::neg_infinity();
    let mut previous = T::neg_infinity();
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..=search.iters {
        let mut num = T::zero();
        for (a, c) in current.a_js.iter().zip(datum.exponents()) {
            num += *c * log_det_pd(a).map_err(|e| breakdown(it, e))?;
        }
        let m = weighted_gram(datum, &current.a_js);
        let eig = sym_eig(&m)?;
        let value = T::lit(0.5) * (num - eig.log_det().map_err(|e| breakdown(it, e))?);
        if value > best_value {
            best_value = value;
            best_input = current.clone();
        }
        if (value - previous).abs() < search.tol {
            converged = true;
            break;
        }
        if it == search.iters {
            break;
        }
        previous = value;
        let m_inv = eig.inverse(eigen_floor(&m)).map_err(|e| breakdown(it, e))?;
        let mut next = Vec::with_capacity(datum.m());
        for b in datum.maps() {
            let q = (&(b * &m_inv) * &b.transpose()).symmetrize();
            let q_eig = sym_eig(&q)?;
            next.push(q_eig.inverse(eigen_floor(&q)).map_err(|e| breakdown(it, e))?);
        }
        current = GaussianInput { a_js: next };
        iterations = it + 1;
    }

    Ok(GaussianMax {
        input: best_input,
        log_bl_lower: best_value,
        iterations,
        converged,
    })
}

/// `log det(AᵀA)` for a tall `A` given by rows, via Householder QR with the
/// rows sorted by decreasing norm and column pivoting. This ordering keeps
/// the result accurate when the rows carry wildly different scales, which is
/// the normal situation in the log-variable search. `None` if rank deficient.
fn log_det_gram_rows(mut rows: Vec<Vec<f64>>) -> Option<f64> {
    let norm2 = |r: &Vec<f64>| r.iter().map(|x| x * x).sum::<f64>();
    rows.sort_by(|a, b| norm2(b).total_cmp(&norm2(a)));
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if m < n {
        return None;
    }
    let scale = rows.iter().map(norm2).fold(0.0, f64::max).sqrt();
    let mut acc = 0.0;
    let mut cols: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let col_norm2 = |j: usize| (k..m).map(|i| rows[i][j] * rows[i][j]).sum::<f64>();
        let pivot = (k..n)
            .max_by(|&a, &b| col_norm2(cols[a]).total_cmp(&col_norm2(cols[b])))
            .expect("non-empty pivot range");
        cols.swap(k, pivot);
        let ck = cols[k];
        let alpha = col_norm2(ck).sqrt();
        if !(alpha > (m as f64) * f64::EPSILON * scale * 1e-3) {
            return None;
        }
        let r_kk = if rows[k][ck] > 0.0 { -alpha } else { alpha };
        let mut v: Vec<f64> = (k..m).map(|i| rows[i][ck]).collect();
        v[0] -= r_kk;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv > 0.0 {
            for &cj in &cols[k..] {
                let d: f64 = v.iter().zip(k..m).map(|(vi, i)| vi * rows[i][cj]).sum();
                let f = 2.0 * d / vv;
                for (vi, i) in v.iter().zip(k..m) {
                    rows[i][cj] -= f * vi;
                }
            }
        }
        acc += 2.0 * r_kk.abs().ln();
    }
    Some(acc)
}

/// Objective `Σ c_j x_j − log det(Σ c_j e^{x_j} u_ju_jᵀ)` in log-variables;
/// `+∞` when the weighted Gram matrix is singular.
fn rank1_objective(units: &[Vec<f64>], c: &[f64], x: &[f64]) -> f64 {
    let lin: f64 = c.iter().zip(x).map(|(c, x)| c * x).sum();
    let rows = units
        .iter()
        .zip(c)
        .zip(x)
        .map(|((u, &cj), &xj)| {
            let w = (0.5 * (cj.ln() + xj)).exp();
            u.iter().map(|ui| w * ui).collect()
        })
        .collect();
    match log_det_gram_rows(rows) {
        Some(ld) => lin - ld,
        None => f64::INFINITY,
    }
}

/// Golden-section maximisation of a concave function on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 {
        if fc < fd {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        } else {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        }
    }
    let mid = 0.5 * (a + b);
    [(mid, f(mid)), (lo, f(lo)), (hi, f(hi))]
        .into_iter()
        .fold((mid, f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc })
}

/// Brute-force gaussian lower bound for data whose maps are all rank one
/// (`B_j x = ⟨u_j, x⟩`).
///
/// Scans a `grid`-point-per-axis lattice over `log a_j ∈ [−12, 12]` (skipped
/// when it would exceed two million points), then polishes the best lattice
/// point by cyclic coordinate ascent with golden-section line searches. The
/// objective is concave in the log-variables, so each line search is
/// unimodal. Returns `log BL(B, c; a)` at the best point, i.e. half the
/// maximised objective; `+∞` when the directions leave a common kernel.
pub fn rank1_scalar_oracle<T: Scalar>(datum: &Datum<T>, grid: usize) -> Result<T> {
    if datum.maps().iter().any(|b| b.rows() != 1) {
        return Err(Error::Precondition("rank1_scalar_oracle needs every n_j = 1".into()));
    }
    if grid == 0 {
        return Err(Error::InvalidParameter("grid must be positive".into()));
    }
    let units: Vec<Vec<f64>> = datum
        .maps()
        .iter()
        .map(|b| b.row(0).iter().map(|x| x.as_f64()).collect())
        .collect();
    let c: Vec<f64> = datum.exponents().iter().map(|x| x.as_f64()).collect();
    let m = c.len();
    let axis: Vec<f64> = if grid == 1 {
        vec![0.0]
    } else {
        (0..grid)
            .map(|i| -RANK1_LOG_BOUND + 2.0 * RANK1_LOG_BOUND * i as f64 / (grid - 1) as f64)
            .collect()
    };

    let mut x = vec![0.0; m];
    let points = (grid as f64).powi(m as i32);
    if points <= RANK1_MAX_GRID_POINTS as f64 {
        let total = grid.pow(m as u32);
        let decode = |mut idx: usize| {
            let mut p = vec![0.0; m];
            for slot in p.iter_mut() {
                *slot = axis[idx % grid];
                idx /= grid;
            }
            p
        };
        // Max-reduction keyed on (value, lowest index) is schedule independent.
        let (best_idx, best_val) = (0..total)
            .into_par_iter()
            .map(|i| (i, rank1_objective(&units, &c, &decode(i))))
            .reduce(
                || (usize::MAX, f64::NEG_INFINITY),
                |a, b| {
                    if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                        b
                    } else {
                        a
                    }
                },
            );
        if best_val == f64::INFINITY {
            return Ok(T::infinity());
        }
        x = decode(best_idx);
    }

    let mut value = rank1_objective(&units, &c, &x);
    if value == f64::INFINITY {
        return Ok(T::infinity());
    }
    for _sweep in 0..1_000 {
        let before = value;
        for i in 0..m {
            let (xi, vi) = golden_max(
                |t| {
                    let mut y = x.clone();
                    y[i] = t;
                    rank1_objective(&units, &c, &y)
                },
                -RANK1_LOG_BOUND,
                RANK1_LOG_BOUND,
            );
            if vi > value {
                x[i] = xi;
                value = vi;
            }
        }
        if value - before <= 1e-15 * (1.0 + value.abs()) {
            break;
        }
    }
    Ok(T::lit(0.5 * value))
}

/// A random gaussian input, used for sampling lower bounds.
pub fn random_gaussian_input<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    dims: &[usize],
    spread: f64,
) -> GaussianInput<T> {
    GaussianInput {
        a_js: dims.iter().map(|&d| random_spd(rng, d, spread)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::{make_holder, make_loomis_whitney, make_remark_datum};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn geometric_identity_ratio_is_zero() {
        let d = make_loomis_whitney::<f64>(3).unwrap().datum;
        let r = gaussian_ratio(&d, &GaussianInput::identity(&d.dims())).unwrap();
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-15);
        let h = make_holder::<f64>(2, &[0.5, 0.5]).unwrap().datum;
        assert_eq!(gaussian_ratio(&h, &GaussianInput::identity(&h.dims())).unwrap(), 0.0);
    }

    #[test]
    fn remark_identity_ratio_by_hand() {
        let d = make_remark_datum::<f64>(FRAC_PI_4).unwrap().datum;
        let r = gaussian_ratio(&d, &GaussianInput::identity(&d.dims())).unwrap();
        // M = [[5/4, 1/4], [1/4, 3/4]], det = 15/16 − 1/16 = 7/8.
        assert_abs_diff_eq!(r, -0.5 * (7.0f64 / 8.0).ln(), epsilon = 1e-15);
    }

    #[test]
    fn shape_and_definiteness_errors() {
        let d = make_remark_datum::<f64>(FRAC_PI_4).unwrap().datum;
        assert!(gaussian_ratio(&d, &GaussianInput::identity(&[1, 1])).is_err());
        let mut g = GaussianInput::identity(&d.dims());
        g.a_js[0][(0, 0)] = -1.0;
        assert!(matches!(
            gaussian_ratio(&d, &g),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn maximize_stays_at_identity_for_geometric() {
        let d = make_loomis_whitney::<f64>(4).unwrap().datum;
        let r = maximize_gaussian(&d, 100, 1e-14).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.log_bl_lower, 0.0, epsilon = 1e-14);
        for a in &r.input.a_js {
            assert!((a - &Matrix::identity(3)).max_abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_rank_one_pair() {
        // Two orthogonal directions with c = (1, 1): geometric after rotation.
        let th: f64 = 0.3;
        let d = Datum::new(
            2,
            vec![
                Matrix::row_vector(&[th.cos(), th.sin()]),
                Matrix::row_vector(&[-th.sin(), th.cos()]),
            ],
            vec![1.0, 1.0],
        )
        .unwrap();
        let r = maximize_gaussian(&d, 100, 1e-14).unwrap();
        assert_abs_diff_eq!(r.log_bl_lower, 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(rank1_scalar_oracle(&d, 9).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rank1_oracle_on_remark() {
        let d = make_remark_datum::<f64>(FRAC_PI_4).unwrap().datum;
        let v = rank1_scalar_oracle(&d, 25).unwrap();
        // Closed form ¼ log 2 (the supremum is approached, not attained).
        assert!(v > 0.0);
        assert_abs_diff_eq!(v, 0.25 * 2f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn rank1_oracle_degenerate_span() {
        let e1 = Matrix::row_vector(&[1.0, 0.0]);
        let d = Datum::new(2, vec![e1.clone(), e1], vec![1.0, 1.0]).unwrap();
        assert_eq!(rank1_scalar_oracle(&d, 5).unwrap(), f64::INFINITY);
        assert!(maximize_gaussian(&d, 10, 1e-12).is_err());
    }

    #[test]
    fn rank1_oracle_rejects_higher_rank() {
        let d = make_loomis_whitney::<f64>(3).unwrap().datum;
        assert!(rank1_scalar_oracle(&d, 5).is_err());
    }

    #[test]
    fn maximize_agrees_with_rank1_oracle() {
        // BL = |sin θ|^{-1/2} for every admissible angle.
        let off = make_remark_datum::<f64>(1.2).unwrap().datum;
        let oracle = rank1_scalar_oracle(&off, 25).unwrap();
        assert_abs_diff_eq!(oracle, -0.5 * 1.2f64.sin().ln(), epsilon = 1e-9);

        let d = make_remark_datum::<f64>(FRAC_PI_4).unwrap().datum;
        let oracle = rank1_scalar_oracle(&d, 25).unwrap();
        let r = maximize_gaussian(&d, 400_000, 1e-15).unwrap();
        assert!(r.log_bl_lower <= oracle + 1e-12);
        assert!((oracle - r.log_bl_lower) / oracle < 1e-5, "{oracle} {r:?}");
    }

    #[test]
    fn restarts_never_hurt() {
        let d = make_remark_datum::<f64>(0.8).unwrap().datum;
        let plain = maximize_gaussian(&d, 200, 1e-14).unwrap();
        let search = GaussianSearch {
            iters: 200,
            tol: 1e-14,
            restarts: 3,
            seed: 9,
        };
        let restarted = maximize_gaussian_with(&d, &search).unwrap();
        assert!(restarted.log_bl_lower >= plain.log_bl_lower);
    }
}
