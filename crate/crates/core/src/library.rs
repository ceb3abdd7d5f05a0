//! Named example data and seeded random ensembles with known constants.

use serde::{Deserialize, Serialize};

use crate::datum::{apply_equivalence, geometricity, Datum, Equivalence};
use crate::error::{Error, Result};
use crate::flow::{project_to_geometric, run_flow, FlowConfig};
use crate::matrix::Matrix;
use crate::random::{random_equivalence, random_orthogonal, seeded};
use crate::scalar::Scalar;

/// Tolerance on `Σ c_j = 1` for Hölder data.
const HOLDER_SUM_TOL: f64 = 1e-12;
/// Tolerance on `Σ c_j n_j = n` for random data.
const SCALING_TOL: f64 = 1e-9;
const RANDOM_ATTEMPTS: usize = 8;
/// Default condition-number bound of the random intertwiners.
pub const DEFAULT_MAX_CONDITION: f64 = 10.0;

/// Known values attached to a generated datum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    pub bl_log: f64,
    pub is_geometric: bool,
    /// How `bl_log` is known: `exact`, `closed form` or `construction`.
    pub provenance: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedDatum<T> {
    pub name: String,
    pub datum: Datum<T>,
    pub expected: Option<Expected>,
}

/// `B_j = I_n` for every `j`; requires `Σ c_j = 1`.
pub fn make_holder<T: Scalar>(n: usize, c: &[T]) -> Result<NamedDatum<T>> {
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    if c.is_empty() {
        return Err(Error::InvalidExponents("no exponents given".into()));
    }
    let sum: T = c.iter().copied().sum();
    if !((sum - T::one()).abs() <= T::lit(HOLDER_SUM_TOL)) {
        return Err(Error::InvalidExponents(format!("exponents sum to {sum}, not 1")));
    }
    let datum = Datum::new(n, vec![Matrix::identity(n); c.len()], c.to_vec())?;
    Ok(NamedDatum {
        name: format!("holder-{n}-{}", c.len()),
        datum,
        expected: Some(Expected {
            bl_log: 0.0,
            is_geometric: true,
            provenance: "exact".into(),
        }),
    })
}

/// The `n` coordinate projections `ℝⁿ → ℝ^{n−1}` with `c_j = 1/(n−1)`.
pub fn make_loomis_whitney<T: Scalar>(n: usize) -> Result<NamedDatum<T>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "Loomis-Whitney needs n >= 2, got {n}"
        )));
    }
    let maps = (0..n)
        .map(|j| {
            Matrix::from_fn(n - 1, n, |r, col| {
                let kept = if r < j { r } else { r + 1 };
                if col == kept {
                    T::one()
                } else {
                    T::zero()
                }
            })
        })
        .collect();
    let c = T::one() / T::from_usize(n - 1);
    Ok(NamedDatum {
        name: format!("loomis-whitney-{n}"),
        datum: Datum::new(n, maps, vec![c; n])?,
        expected: Some(Expected {
            bl_log: 0.0,
            is_geometric: true,
            provenance: "exact".into(),
        }),
    })
}

/// Three unit directions `e_1`, `e_2`, `(cos a, sin a)` in the plane with
/// `c = (1, ½, ½)`. Feasible, but geometric for no angle, and its constant
/// `|sin a|^{-1/2}` is not attained by any gaussian.
pub fn make_remark_datum<T: Scalar>(angle: f64) -> Result<NamedDatum<T>> {
    let (s, c) = angle.sin_cos();
    if !(s.abs() >= 1e-12 && c.abs() >= 1e-12) {
        return Err(Error::DegenerateDirections { angle });
    }
    let row = |x: f64, y: f64| Matrix::row_vector(&[T::lit(x), T::lit(y)]);
    let datum = Datum::new(
        2,
        vec![row(1.0, 0.0), row(0.0, 1.0), row(c, s)],
        vec![T::one(), T::lit(0.5), T::lit(0.5)],
    )?;
    Ok(NamedDatum {
        name: "remark".into(),
        datum,
        expected: Some(Expected {
            bl_log: -0.5 * s.abs().ln(),
            is_geometric: false,
            provenance: "closed form".into(),
        }),
    })
}

/// A random geometric datum moved by a random equivalence with condition
/// numbers at most 10; see [`make_random_feasible_with`].
pub fn make_random_feasible<T: Scalar>(
    n: usize,
    m: usize,
    dims: &[usize],
    c: &[f64],
    seed: u64,
) -> Result<NamedDatum<T>> {
    make_random_feasible_with(n, m, dims, c, seed, Some(DEFAULT_MAX_CONDITION))
}

/// Random rows of Haar orthogonal matrices are balanced by a short run of the
/// flow and snapped to an exactly geometric datum `G`. With `max_condition`
/// set, a random equivalence `(T, T_j)` is then applied, and the expected
/// constant is `log BL = Σ c_j log|det T_j| − log|det T|`. With `None` the
/// geometric datum itself is returned.
///
/// Generation is done in `f64` and cast to `T`.
pub fn make_random_feasible_with<T: Scalar>(
    n: usize,
    m: usize,
    dims: &[usize],
    c: &[f64],
    seed: u64,
    max_condition: Option<f64>,
) -> Result<NamedDatum<T>> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter("n and m must be positive".into()));
    }
    if dims.len() != m || c.len() != m {
        return Err(Error::InvalidParameter(format!(
            "need {m} dimensions and {m} exponents, got {} and {}",
            dims.len(),
            c.len()
        )));
    }
    if let Some(&d) = dims.iter().find(|&&d| d == 0 || d > n) {
        return Err(Error::InvalidParameter(format!(
            "target dimension {d} not in 1..={n}"
        )));
    }
    if c.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidExponents("exponents must be positive".into()));
    }
    let scaling: f64 = c.iter().zip(dims).map(|(c, &d)| c * d as f64).sum();
    if (scaling - n as f64).abs() > SCALING_TOL * n as f64 {
        return Err(Error::InvalidExponents(format!(
            "sum c_j n_j = {scaling} differs from n = {n}"
        )));
    }
    if let Some(k) = max_condition {
        if !(k >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "condition bound {k} must be at least 1"
            )));
        }
    }

    let config = FlowConfig {
        max_iters: 20_000,
        geo_tol: 1e-12,
        stall_tol: 0.0,
    };
    for attempt in 0..RANDOM_ATTEMPTS {
        let mut rng = seeded(seed.wrapping_add((attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        let maps: Vec<Matrix<f64>> = dims
            .iter()
            .map(|&d| {
                let q = random_orthogonal::<f64, _>(&mut rng, n);
                Matrix::from_fn(d, n, |r, col| q[(r, col)])
            })
            .collect();
        let start = Datum::new(n, maps, c.to_vec())?;
        let trace = run_flow(&start, &config);
        if !trace.termination.is_converged() {
            log::debug!("random datum attempt {attempt}: {}", trace.termination);
            continue;
        }
        let Ok(g) = project_to_geometric(&trace.last.datum) else {
            continue;
        };
        let report = geometricity(&g, 1e-12);
        if !(report.is_projection_normalised && report.is_isotropic) {
            continue;
        }
        let (datum, bl_log, is_geometric) = match max_condition {
            Some(k) => {
                let eq: Equivalence<f64> = random_equivalence(&mut rng, n, dims, k);
                let bl_log = eq.log_bl_factor(c);
                (apply_equivalence(&g, &eq)?, bl_log, false)
            }
            None => (g, 0.0, true),
        };
        return Ok(NamedDatum {
            name: format!("random-feasible-{n}-{m}-{seed}"),
            datum: datum.cast(),
            expected: Some(Expected {
                bl_log,
                is_geometric,
                provenance: "construction".into(),
            }),
        });
    }
    Err(Error::GenerationFailed {
        attempts: RANDOM_ATTEMPTS,
    })
}
