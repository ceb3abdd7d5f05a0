//! Adjoint Brascamp–Lieb exponents, centred gaussians and their
//! push-forwards, and the sandwich check
//! `C·BL^{1/p−1} ≤ ABL ≤ BL^{1/p−1}` sampled over gaussians.
//!
//! A centred gaussian is `f(x) = exp(L)·exp(−π⟨Ax, x⟩)`; everything is kept
//! in log space.

use rayon::prelude::*;
use serde::Serialize;

use crate::datum::Datum;
use crate::error::{Error, Result};
use crate::linalg::{eigen_floor, log_det_pd, sym_eig};
use crate::matrix::Matrix;
use crate::random::{random_spd, seeded};
use crate::scalar::Scalar;

const THETA_SUM_TOL: f64 = 1e-12;

/// `θ`, `p`, the derived `p_j` and `log C(c, θ, n, p)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdjointParams<T: Scalar> {
    pub theta: Vec<T>,
    pub p: T,
    pub p_js: Vec<T>,
    #[serde(rename = "log_C")]
    pub log_c: T,
}

impl<T: Scalar> AdjointParams<T> {
    /// `1/p − 1`.
    pub fn gap(&self) -> T {
        self.p.recip() - T::one()
    }

    /// Solves the exponent relation back for `θ` given the stored `p_j`.
    /// Returns `None` when `p = 1`, where the relation does not determine `θ`.
    pub fn recover_theta(&self, exponents: &[T]) -> Option<Vec<T>> {
        let gap = self.gap();
        if gap == T::zero() {
            return None;
        }
        Some(
            exponents
                .iter()
                .zip(&self.p_js)
                .map(|(&c, &pj)| c * gap / (pj.recip() - T::one()))
                .collect(),
        )
    }
}

/// `p_j = θ_j / (θ_j + c_j(1/p − 1))` and
/// `log C = −(n/2p) log p + Σ (θ_j n_j / 2p_j) log p_j`.
pub fn derive_adjoint_params<T: Scalar>(datum: &Datum<T>, theta: &[T], p: T) -> Result<AdjointParams<T>> {
    if theta.len() != datum.m() {
        return Err(Error::InvalidTheta(format!(
            "expected {} weights, got {}",
            datum.m(),
            theta.len()
        )));
    }
    if let Some((j, t)) = theta
        .iter()
        .enumerate()
        .find(|(_, &t)| !(t > T::zero() && t <= T::one()))
    {
        return Err(Error::InvalidTheta(format!("theta_{j} = {t} is outside (0, 1]")));
    }
    let sum: T = theta.iter().copied().sum();
    if !((sum - T::one()).abs() <= T::lit(THETA_SUM_TOL)) {
        return Err(Error::InvalidTheta(format!("weights sum to {sum}, not 1")));
    }
    if !(p > T::zero() && p <= T::one()) {
        return Err(Error::InvalidP(p.as_f64()));
    }

    let gap = p.recip() - T::one();
    let two = T::lit(2.0);
    let p_js: Vec<T> = theta
        .iter()
        .zip(datum.exponents())
        .map(|(&t, &c)| t / (t + c * gap))
        .collect();
    let mut log_c = -(T::from_usize(datum.n()) / (two * p)) * p.ln();
    for ((&t, &pj), nj) in theta.iter().zip(&p_js).zip(datum.dims()) {
        log_c += t * T::from_usize(nj) / (two * pj) * pj.ln();
    }
    Ok(AdjointParams {
        theta: theta.to_vec(),
        p,
        p_js,
        log_c,
    })
}

/// `exp(log_coeff)·exp(−π⟨Ax, x⟩)` on `ℝ^dim`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CenteredGaussian<T: Scalar> {
    pub dim: usize,
    pub a: Matrix<T>,
    pub log_coeff: T,
}

impl<T: Scalar> CenteredGaussian<T> {
    pub fn new(a: Matrix<T>, log_coeff: T) -> Result<Self> {
        if !a.is_square() || a.rows() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "gaussian matrix must be square and non-empty, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        if !log_coeff.is_finite() {
            return Err(Error::NonFinite);
        }
        let a = a.symmetrize();
        let eig = sym_eig(&a)?;
        if !(eig.min_eigenvalue() > T::zero()) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: eig.min_eigenvalue().as_f64(),
            });
        }
        Ok(Self {
            dim: a.rows(),
            a,
            log_coeff,
        })
    }

    /// `exp(−π|x|²)`.
    pub fn isotropic(dim: usize) -> Self {
        Self {
            dim,
            a: Matrix::identity(dim),
            log_coeff: T::zero(),
        }
    }

    /// `f ∘ T`, i.e. `A ↦ TᵀAT`.
    pub fn precompose(&self, t: &Matrix<T>) -> Result<Self> {
        if t.shape() != (self.dim, self.dim) {
            return Err(Error::ShapeMismatch(format!(
                "precomposition needs a {0}x{0} matrix",
                self.dim
            )));
        }
        Self::new(&(&t.transpose() * &self.a) * t, self.log_coeff)
    }

    /// Value at a point.
    pub fn eval(&self, x: &[T]) -> T {
        let mut q = T::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                q += x[i] * self.a[(i, j)] * x[j];
            }
        }
        (self.log_coeff - T::PI() * q).exp()
    }
}

/// Push-forward `(B)_*f` of a centred gaussian under a surjection `B`:
/// `A' = (BA⁻¹Bᵀ)⁻¹`, `L' = L − ½ log det A − ½ log det(BA⁻¹Bᵀ)`.
pub fn pushforward_gaussian<T: Scalar>(b: &Matrix<T>, f: &CenteredGaussian<T>) -> Result<CenteredGaussian<T>> {
    if b.cols() != f.dim {
        return Err(Error::ShapeMismatch(format!(
            "map has {} columns but the gaussian lives on R^{}",
            b.cols(),
            f.dim
        )));
    }
    let a_eig = sym_eig(&f.a)?;
    let a_inv = a_eig.inverse(eigen_floor(&f.a))?;
    let q = (&(b * &a_inv) * &b.transpose()).symmetrize();
    let q_eig = sym_eig(&q)?;
    let q_inv = q_eig.inverse(eigen_floor(&q))?;
    let half = T::lit(0.5);
    Ok(CenteredGaussian {
        dim: b.rows(),
        a: q_inv.symmetrize(),
        log_coeff: f.log_coeff - half * a_eig.log_det()? - half * q_eig.log_det()?,
    })
}

/// `log ‖f‖_q = L + (1/q)(−(dim/2) log q − ½ log det A)`.
pub fn lp_norm_gaussian<T: Scalar>(f: &CenteredGaussian<T>, q: T) -> Result<T> {
    if !(q > T::zero()) {
        return Err(Error::InvalidParameter(format!("norm exponent {q} must be positive")));
    }
    let half = T::lit(0.5);
    let inner = -(T::from_usize(f.dim) * half) * q.ln() - half * log_det_pd(&f.a)?;
    Ok(f.log_coeff + inner / q)
}

/// `log ‖f‖_p − Σ θ_j log ‖(B_j)_*f‖_{p_j}`: a lower bound on the log of the
/// adjoint constant for every gaussian `f`.
pub fn abl_ratio<T: Scalar>(datum: &Datum<T>, params: &AdjointParams<T>, f: &CenteredGaussian<T>) -> Result<T> {
    if params.theta.len() != datum.m() {
        return Err(Error::ShapeMismatch("parameters were derived for another datum".into()));
    }
    let mut r = lp_norm_gaussian(f, params.p)?;
    for ((b, &t), &pj) in datum.maps().iter().zip(&params.theta).zip(&params.p_js) {
        r -= t * lp_norm_gaussian(&pushforward_gaussian(b, f)?, pj)?;
    }
    Ok(r)
}

/// Sampling options for [`sandwich_check`].
#[derive(Clone, Debug)]
pub struct SandwichConfig {
    /// Number of random positive definite draws.
    pub samples: usize,
    pub seed: u64,
    /// Log-spread of the random eigenvalues (condition number ≤ e^{2·spread}).
    pub spread: f64,
    pub upper_tol: f64,
    pub lower_slack: f64,
}

impl Default for SandwichConfig {
    fn default() -> Self {
        Self {
            samples: 32,
            seed: 0,
            spread: 1.0,
            upper_tol: 1e-8,
            lower_slack: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SandwichReport {
    #[serde(rename = "log_C")]
    pub log_c: f64,
    pub bl_log: f64,
    pub max_log_ratio: f64,
    pub upper_ok: bool,
    pub lower_ok: bool,
    /// `(1/p − 1)·bl_log − max_log_ratio`; non-negative when the upper bound holds.
    pub margin_upper: f64,
    /// `max_log_ratio − log_C − (1/p − 1)·bl_log`; non-negative when the lower bound is attained.
    pub margin_lower: f64,
}

/// The gaussian family used by [`sandwich_check`]: the isotropic gaussian,
/// the isotropic gaussian carried back through `transport` (if given), and
/// `samples` random positive definite draws.
pub fn sandwich_family<T: Scalar>(
    n: usize,
    transport: Option<&Matrix<T>>,
    config: &SandwichConfig,
) -> Result<Vec<CenteredGaussian<T>>> {
    let mut family = vec![CenteredGaussian::isotropic(n)];
    if let Some(s) = transport {
        if s.shape() != (n, n) {
            return Err(Error::ShapeMismatch(format!("transport must be {n}x{n}")));
        }
        // Isotropic gaussian composed with S⁻¹: A = (S Sᵀ)⁻¹.
        let sst = s.outer_gram();
        let a = sym_eig(&sst)?.inverse(eigen_floor(&sst))?;
        family.push(CenteredGaussian::new(a, T::zero())?);
    }
    let mut rng = seeded(config.seed);
    for _ in 0..config.samples {
        family.push(CenteredGaussian::new(random_spd(&mut rng, n, config.spread), T::zero())?);
    }
    Ok(family)
}

/// Evaluates [`abl_ratio`] over [`sandwich_family`] and compares the maximum
/// with both sides of the sandwich.
///
/// `bl_log` should come from a converged flow or a gaussian oracle; the
/// lower side is only expected to hold when `transport` is the accumulated
/// intertwiner of a flow that reached a geometric datum.
pub fn sandwich_check<T: Scalar>(
    datum: &Datum<T>,
    params: &AdjointParams<T>,
    bl_log: T,
    transport: Option<&Matrix<T>>,
    config: &SandwichConfig,
) -> Result<SandwichReport> {
    let family = sandwich_family(datum.n(), transport, config)?;
    let ratios: Vec<f64> = family
        .par_iter()
        .map(|f| abl_ratio(datum, params, f).map(|r| r.as_f64()))
        .collect::<Result<_>>()?;
    let max_log_ratio = ratios.into_iter().fold(f64::NEG_INFINITY, f64::max);
    let gap = params.gap().as_f64();
    let upper = gap * bl_log.as_f64();
    let lower = params.log_c.as_f64() + upper;
    let margin_upper = upper - max_log_ratio;
    let margin_lower = max_log_ratio - lower;
    Ok(SandwichReport {
        log_c: params.log_c.as_f64(),
        bl_log: bl_log.as_f64(),
        max_log_ratio,
        upper_ok: margin_upper >= -config.upper_tol,
        lower_ok: margin_lower >= -config.lower_slack,
        margin_upper,
        margin_lower,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::{make_holder, make_loomis_whitney};
    use crate::random::random_well_conditioned;
    use approx::assert_abs_diff_eq;

    #[test]
    fn p_one_is_trivial() {
        let d = make_loomis_whitney::<f64>(3).unwrap().datum;
        let params = derive_adjoint_params(&d, &[0.2, 0.3, 0.5], 1.0).unwrap();
        assert!(params.p_js.iter().all(|&pj| pj == 1.0));
        assert_eq!(params.log_c, 0.0);
        assert!(params.recover_theta(d.exponents()).is_none());
    }

    #[test]
    fn holder_constant_is_one() {
        let d = make_holder::<f64>(1, &[0.5, 0.5]).unwrap().datum;
        let params = derive_adjoint_params(&d, &[0.5, 0.5], 0.5).unwrap();
        assert_abs_diff_eq!(params.p_js[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(params.log_c, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn loomis_whitney_constant() {
        let d = make_loomis_whitney::<f64>(3).unwrap().datum;
        let third = 1.0 / 3.0;
        let params = derive_adjoint_params(&d, &[third; 3], 0.75).unwrap();
        for &pj in &params.p_js {
            assert_abs_diff_eq!(pj, 2.0 / 3.0, epsilon = 1e-15);
        }
        let expected = -2.0 * 0.75f64.ln() + 1.5 * (2.0f64 / 3.0).ln();
        assert_abs_diff_eq!(params.log_c, expected, epsilon = 1e-14);
        for (c, t) in d.exponents().iter().zip(&params.theta) {
            let pj = params.p_js[0];
            assert_abs_diff_eq!(c * (1.0 / 0.75 - 1.0), t * (1.0 / pj - 1.0), epsilon = 1e-12);
        }
        let back = params.recover_theta(d.exponents()).unwrap();
        for t in back {
            assert_abs_diff_eq!(t, third, epsilon = 1e-12);
        }
    }

    #[test]
    fn parameter_domain_errors() {
        let d = make_loomis_whitney::<f64>(3).unwrap().datum;
        assert!(matches!(
            derive_adjoint_params(&d, &[0.5, 0.5, 0.5], 0.5),
            Err(Error::InvalidTheta(_))
        ));
        assert!(matches!(
            derive_adjoint_params(&d, &[0.5, 0.5], 0.5),
            Err(Error::InvalidTheta(_))
        ));
        assert!(matches!(
            derive_adjoint_params(&d, &[0.0, 0.5, 0.5], 0.5),
            Err(Error::InvalidTheta(_))
        ));
        for p in [0.0, 1.5, f64::NAN] {
            assert!(matches!(
                derive_adjoint_params(&d, &[0.2, 0.3, 0.5], p),
                Err(Error::InvalidP(_))
            ));
        }
    }

    #[test]
    fn pushforward_examples() {
        let f = CenteredGaussian::<f64>::isotropic(3);
        let b = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let g = pushforward_gaussian(&b, &f).unwrap();
        assert!((&g.a - &Matrix::identity(2)).max_abs() < 1e-15);
        assert_abs_diff_eq!(g.log_coeff, 0.0, epsilon = 1e-15);

        let f1 = CenteredGaussian::new(Matrix::from_diagonal(&[3.0]), 0.25).unwrap();
        let g1 = pushforward_gaussian(&Matrix::identity(1), &f1).unwrap();
        assert_abs_diff_eq!(g1.a[(0, 0)], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g1.log_coeff, 0.25, epsilon = 1e-14);
    }

    #[test]
    fn pushforward_preserves_mass() {
        let mut rng = seeded(5);
        for n in 1..5 {
            for k in 1..=n {
                let f = CenteredGaussian::new(random_spd(&mut rng, n, 1.0), 0.3).unwrap();
                let b = crate::random::gaussian_matrix::<f64, _>(&mut rng, k, n);
                let g = pushforward_gaussian(&b, &f).unwrap();
                let before = lp_norm_gaussian(&f, 1.0).unwrap();
                let after = lp_norm_gaussian(&g, 1.0).unwrap();
                assert_abs_diff_eq!(before, after, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn lp_norm_examples() {
        let f = CenteredGaussian::<f64>::isotropic(1);
        assert_abs_diff_eq!(lp_norm_gaussian(&f, 1.0).unwrap(), 0.0, epsilon = 1e-15);
        let p = 0.4;
        let f3 = CenteredGaussian::<f64>::isotropic(3);
        assert_abs_diff_eq!(
            lp_norm_gaussian(&f3, p).unwrap(),
            -(3.0 / (2.0 * p)) * p.ln(),
            epsilon = 1e-14
        );
        let g = CenteredGaussian::new(Matrix::identity(2).scale(4.0), 0.0).unwrap();
        let q = 0.7;
        assert_abs_diff_eq!(
            lp_norm_gaussian(&g, q).unwrap() - lp_norm_gaussian(&CenteredGaussian::isotropic(2), q).unwrap(),
            -(1.0 / (2.0 * q)) * 2.0 * 4f64.ln(),
            epsilon = 1e-14
        );
        assert!(lp_norm_gaussian(&g, 0.0).is_err());
    }

    #[test]
    fn ratio_on_geometric_is_log_c() {
        let d = make_loomis_whitney::<f64>(4).unwrap().datum;
        let params = derive_adjoint_params(&d, &[0.25; 4], 0.5).unwrap();
        let r = abl_ratio(&d, &params, &CenteredGaussian::isotropic(4)).unwrap();
        assert_abs_diff_eq!(r, params.log_c, epsilon = 1e-13);
    }

    #[test]
    fn ratio_vanishes_at_p_one() {
        let d = make_loomis_whitney::<f64>(3).unwrap().datum;
        let params = derive_adjoint_params(&d, &[0.2, 0.3, 0.5], 1.0).unwrap();
        let mut rng = seeded(3);
        for _ in 0..5 {
            let f = CenteredGaussian::new(random_spd(&mut rng, 3, 1.5), -0.4).unwrap();
            assert_abs_diff_eq!(abl_ratio(&d, &params, &f).unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn precompose_matches_pointwise() {
        let mut rng = seeded(8);
        let f = CenteredGaussian::new(random_spd(&mut rng, 2, 1.0), 0.1).unwrap();
        let t = random_well_conditioned::<f64, _>(&mut rng, 2, 5.0);
        let g = f.precompose(&t).unwrap();
        let x = [0.3, -0.7];
        let tx = [
            t[(0, 0)] * x[0] + t[(0, 1)] * x[1],
            t[(1, 0)] * x[0] + t[(1, 1)] * x[1],
        ];
        assert_abs_diff_eq!(g.eval(&x), f.eval(&tx), epsilon = 1e-14);
    }

    #[test]
    fn sandwich_on_geometric() {
        let d = make_loomis_whitney::<f64>(3).unwrap().datum;
        let params = derive_adjoint_params(&d, &[1.0 / 3.0; 3], 0.5).unwrap();
        let report = sandwich_check(&d, &params, 0.0, None, &SandwichConfig::default()).unwrap();
        assert!(report.upper_ok && report.lower_ok, "{report:?}");
        assert_abs_diff_eq!(report.max_log_ratio, params.log_c, epsilon = 1e-12);
        let json = serde_json::to_value(&report).unwrap();
        for key in [
            "log_C",
            "bl_log",
            "max_log_ratio",
            "upper_ok",
            "lower_ok",
            "margin_upper",
            "margin_lower",
        ] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn sandwich_family_is_deterministic() {
        let cfg = SandwichConfig::default();
        let a = sandwich_family::<f64>(3, None, &cfg).unwrap();
        let b = sandwich_family::<f64>(3, None, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 33);
        let s = Matrix::identity(3).scale(2.0);
        let c = sandwich_family::<f64>(3, Some(&s), &cfg).unwrap();
        assert_eq!(c.len(), 34);
        assert!((&c[1].a - &Matrix::identity(3).scale(0.25)).max_abs() < 1e-15);
    }
}
