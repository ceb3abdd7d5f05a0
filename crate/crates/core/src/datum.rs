//! Brascamp–Lieb data `(B, c)`, their validation, geometricity predicates,
//! necessary feasibility conditions and equivalence transforms.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::numerical_rank;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Default tolerance for the geometricity booleans.
pub const DEFAULT_GEOMETRICITY_TOL: f64 = 1e-9;

/// A Brascamp–Lieb datum: linear maps `B_j : ℝⁿ → ℝ^{n_j}` with exponents `c_j`.
///
/// `Datum::new` enforces the structural invariants. `Datum::new_unchecked`
/// exists so that malformed input (e.g. from a JSON file) can still be
/// represented and passed to [`validate`] for a full list of violations.
#[derive(Clone, Debug, PartialEq)]
pub struct Datum<T> {
    n: usize,
    maps: Vec<Matrix<T>>,
    exponents: Vec<T>,
}

impl<T: Scalar> Datum<T> {
    pub fn new(n: usize, maps: Vec<Matrix<T>>, exponents: Vec<T>) -> Result<Self> {
        let d = Self::new_unchecked(n, maps, exponents);
        let report = validate_structure(&d);
        if report.is_valid() {
            Ok(d)
        } else {
            Err(Error::InvalidDatum(report))
        }
    }

    pub fn new_unchecked(n: usize, maps: Vec<Matrix<T>>, exponents: Vec<T>) -> Self {
        Self { n, maps, exponents }
    }

    /// Ambient dimension `n`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of maps `m`.
    pub fn m(&self) -> usize {
        self.maps.len()
    }

    pub fn maps(&self) -> &[Matrix<T>] {
        &self.maps
    }

    pub fn exponents(&self) -> &[T] {
        &self.exponents
    }

    /// Target dimensions `n_j`.
    pub fn dims(&self) -> Vec<usize> {
        self.maps.iter().map(Matrix::rows).collect()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&Matrix<T>, T)> {
        self.maps.iter().zip(self.exponents.iter().copied())
    }

    /// Same exponents, new maps.
    pub fn with_maps(&self, maps: Vec<Matrix<T>>) -> Self {
        Self {
            n: self.n,
            maps,
            exponents: self.exponents.clone(),
        }
    }

    /// `Σ c_j B_jᵀ B_j`.
    pub fn isotropy_matrix(&self) -> Matrix<T> {
        let mut m = Matrix::zeros(self.n, self.n);
        for (b, c) in self.pairs() {
            m = &m + &b.gram().scale(c);
        }
        m
    }

    /// `Σ c_j n_j`.
    pub fn scaling_sum(&self) -> T {
        self.pairs().map(|(b, c)| c * T::from_usize(b.rows())).sum()
    }

    /// Flow norm of the difference: max over j of `‖B_j − B̃_j‖_F`.
    pub fn distance(&self, other: &Self) -> T {
        assert_eq!(self.m(), other.m(), "data have different numbers of maps");
        self.maps
            .iter()
            .zip(&other.maps)
            .map(|(a, b)| (a - b).frobenius_norm())
            .fold(T::zero(), T::max)
    }

    /// Reorders the `(B_j, c_j)` pairs; `order[k]` is the source index of slot `k`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            n: self.n,
            maps: order.iter().map(|&i| self.maps[i].clone()).collect(),
            exponents: order.iter().map(|&i| self.exponents[i]).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Datum<U> {
        Datum {
            n: self.n,
            maps: self.maps.iter().map(Matrix::cast).collect(),
            exponents: self.exponents.iter().map(|&c| U::lit(c.as_f64())).collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
struct MapRepr<T: Scalar> {
    matrix: Matrix<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
struct DatumRepr<T: Scalar> {
    n: usize,
    maps: Vec<MapRepr<T>>,
    exponents: Vec<T>,
}

impl<T: Scalar> Serialize for Datum<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DatumRepr {
            n: self.n,
            maps: self
                .maps
                .iter()
                .map(|m| MapRepr { matrix: m.clone() })
                .collect(),
            exponents: self.exponents.clone(),
        }
        .serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Datum<T> {
    /// Deserialises without checking invariants; run [`validate`] afterwards.
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = DatumRepr::<T>::deserialize(d)?;
        Ok(Datum::new_unchecked(
            repr.n,
            repr.maps.into_iter().map(|m| m.matrix).collect(),
            repr.exponents,
        ))
    }
}

/// A single structural problem with a datum.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NoMaps,
    ZeroDimension,
    LengthMismatch { maps: usize, exponents: usize },
    EmptyMap { index: usize },
    ColumnCountMismatch { index: usize, expected: usize, found: usize },
    ExponentNotPositive { index: usize, value: f64 },
    NonFiniteEntry { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoMaps => write!(f, "datum must contain at least one map"),
            Violation::ZeroDimension => write!(f, "ambient dimension must be positive"),
            Violation::LengthMismatch { maps, exponents } => write!(
                f,
                "maps and exponents must have equal length ({maps} maps, {exponents} exponents)"
            ),
            Violation::EmptyMap { index } => write!(f, "map {index} has no rows"),
            Violation::ColumnCountMismatch {
                index,
                expected,
                found,
            } => write!(
                f,
                "column count mismatch: map {index} has {found} columns, expected {expected}"
            ),
            Violation::ExponentNotPositive { index, value } => {
                write!(f, "exponent must be positive (c_{index} = {value})")
            }
            Violation::NonFiniteEntry { index } => {
                write!(f, "map {index} contains a non-finite entry")
            }
        }
    }
}

/// Result of [`validate`]: hard violations plus feasibility warnings.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

fn validate_structure<T: Scalar>(d: &Datum<T>) -> ValidationReport {
    let mut violations = Vec::new();
    if d.maps.is_empty() {
        violations.push(Violation::NoMaps);
    }
    if d.n == 0 {
        violations.push(Violation::ZeroDimension);
    }
    if d.maps.len() != d.exponents.len() {
        violations.push(Violation::LengthMismatch {
            maps: d.maps.len(),
            exponents: d.exponents.len(),
        });
    }
    for (index, b) in d.maps.iter().enumerate() {
        if b.rows() == 0 {
            violations.push(Violation::EmptyMap { index });
        }
        if b.cols() != d.n {
            violations.push(Violation::ColumnCountMismatch {
                index,
                expected: d.n,
                found: b.cols(),
            });
        }
        if !b.is_finite() {
            violations.push(Violation::NonFiniteEntry { index });
        }
    }
    for (index, &c) in d.exponents.iter().enumerate() {
        if !(c > T::zero()) || !c.is_finite() {
            violations.push(Violation::ExponentNotPositive {
                index,
                value: c.as_f64(),
            });
        }
    }
    ValidationReport {
        violations,
        warnings: Vec::new(),
    }
}

/// Checks shapes, exponents and finiteness; when those pass, also runs
/// [`feasibility_check`] and reports failed necessary conditions as warnings.
pub fn validate<T: Scalar>(datum: &Datum<T>) -> ValidationReport {
    let mut report = validate_structure(datum);
    if report.is_valid() {
        report.warnings = feasibility_check(datum).reasons();
    }
    report
}

/// How close a datum is to geometric.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeometricityReport<T> {
    /// `max_j ‖B_j B_jᵀ − I‖_F`.
    pub projection_defect: T,
    /// `tr(Σ c_j B_jᵀB_j − I)²`.
    pub isotropy_defect: T,
    pub is_projection_normalised: bool,
    pub is_isotropic: bool,
    pub is_geometric: bool,
    pub tol: T,
}

/// `max_j ‖B_j B_jᵀ − I‖_F`.
pub fn projection_defect<T: Scalar>(datum: &Datum<T>) -> T {
    datum
        .maps
        .iter()
        .map(|b| (&b.outer_gram() - &Matrix::identity(b.rows())).frobenius_norm())
        .fold(T::zero(), T::max)
}

/// `tr(Σ c_j B_jᵀB_j − I)²`, i.e. the squared Frobenius norm of the symmetric
/// residual.
pub fn isotropy_defect<T: Scalar>(datum: &Datum<T>) -> T {
    let r = &datum.isotropy_matrix() - &Matrix::identity(datum.n);
    r.as_slice().iter().map(|&x| x * x).sum()
}

pub fn geometricity<T: Scalar>(datum: &Datum<T>, tol: T) -> GeometricityReport<T> {
    let projection_defect = projection_defect(datum);
    let isotropy_defect = isotropy_defect(datum);
    let is_projection_normalised = projection_defect < tol;
    let is_isotropic = isotropy_defect < tol;
    GeometricityReport {
        projection_defect,
        isotropy_defect,
        is_projection_normalised,
        is_isotropic,
        is_geometric: is_projection_normalised && is_isotropic,
        tol,
    }
}

/// Intertwining transformations relating `B̃_j = T_j⁻¹ B_j T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Equivalence<T> {
    t: Matrix<T>,
    t_js: Vec<Matrix<T>>,
}

impl<T: Scalar> Equivalence<T> {
    pub fn new(t: Matrix<T>, t_js: Vec<Matrix<T>>) -> Result<Self> {
        check_invertible(&t, "T")?;
        for (j, tj) in t_js.iter().enumerate() {
            check_invertible(tj, &format!("T_{j}"))?;
        }
        Ok(Self { t, t_js })
    }

    pub fn identity(n: usize, dims: &[usize]) -> Self {
        Self {
            t: Matrix::identity(n),
            t_js: dims.iter().map(|&d| Matrix::identity(d)).collect(),
        }
    }

    pub fn t(&self) -> &Matrix<T> {
        &self.t
    }

    pub fn t_js(&self) -> &[Matrix<T>] {
        &self.t_js
    }

    /// The intertwiners undoing this equivalence.
    pub fn inverse(&self) -> Result<Self> {
        let inv = |m: &Matrix<T>, name: &str| {
            m.inverse().ok_or_else(|| Error::SingularIntertwiner {
                which: name.to_string(),
            })
        };
        Ok(Self {
            t: inv(&self.t, "T")?,
            t_js: self
                .t_js
                .iter()
                .enumerate()
                .map(|(j, m)| inv(m, &format!("T_{j}")))
                .collect::<Result<_>>()?,
        })
    }

    /// `Σ c_j log|det T_j| − log|det T|`: the log of the factor by which the
    /// BL constant changes when this equivalence is applied.
    pub fn log_bl_factor(&self, exponents: &[T]) -> T {
        let lhs: T = self
            .t_js
            .iter()
            .zip(exponents)
            .map(|(tj, &c)| c * tj.log_abs_det())
            .sum();
        lhs - self.t.log_abs_det()
    }
}

fn check_invertible<T: Scalar>(m: &Matrix<T>, name: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch(format!("{name} must be square")));
    }
    if !m.log_abs_det().is_finite() {
        return Err(Error::SingularIntertwiner {
            which: name.to_string(),
        });
    }
    Ok(())
}

/// Maps `B_j ↦ T_j⁻¹ B_j T`, leaving exponents unchanged.
pub fn apply_equivalence<T: Scalar>(datum: &Datum<T>, eq: &Equivalence<T>) -> Result<Datum<T>> {
    if eq.t.rows() != datum.n {
        return Err(Error::ShapeMismatch(format!(
            "T is {}x{} but the datum lives in dimension {}",
            eq.t.rows(),
            eq.t.cols(),
            datum.n
        )));
    }
    if eq.t_js.len() != datum.m() {
        return Err(Error::ShapeMismatch(format!(
            "{} intertwiners for {} maps",
            eq.t_js.len(),
            datum.m()
        )));
    }
    let mut maps = Vec::with_capacity(datum.m());
    for (j, (b, tj)) in datum.maps.iter().zip(&eq.t_js).enumerate() {
        if tj.rows() != b.rows() {
            return Err(Error::ShapeMismatch(format!(
                "T_{j} is {}x{} but B_{j} has {} rows",
                tj.rows(),
                tj.cols(),
                b.rows()
            )));
        }
        let tj_inv = tj.inverse().ok_or_else(|| Error::SingularIntertwiner {
            which: format!("T_{j}"),
        })?;
        maps.push(&(&tj_inv * b) * &eq.t);
    }
    Ok(datum.with_maps(maps))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Feasibility {
    /// Every checked necessary condition holds. Never a certificate.
    PossiblyFeasible,
    Infeasible,
}

/// Outcome of the three necessary feasibility conditions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport {
    /// `Σ c_j n_j`.
    pub scaling_sum: f64,
    pub n: usize,
    pub scaling_ok: bool,
    /// Indices of maps whose numerical rank is below `n_j`.
    pub non_surjective: Vec<usize>,
    /// `n − rank` of the stacked maps.
    pub common_kernel_dim: usize,
    pub verdict: Feasibility,
}

impl FeasibilityReport {
    /// Human-readable list of the failed conditions.
    pub fn reasons(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.scaling_ok {
            out.push(format!(
                "scaling condition fails: sum c_j n_j = {} but n = {}",
                self.scaling_sum, self.n
            ));
        }
        for j in &self.non_surjective {
            out.push(format!("B_{j} is not surjective"));
        }
        if self.common_kernel_dim > 0 {
            out.push(format!(
                "maps share a common kernel of dimension {}",
                self.common_kernel_dim
            ));
        }
        out
    }
}

/// Tolerance for `n = Σ c_j n_j`.
fn scaling_tolerance<T: Scalar>(n: usize) -> T {
    T::lit(1e-9).max(T::lit(64.0) * T::epsilon()) * T::from_usize(n.max(1))
}

/// Checks the necessary conditions (scaling, surjectivity, trivial common
/// kernel). Expects a structurally valid datum.
pub fn feasibility_check<T: Scalar>(datum: &Datum<T>) -> FeasibilityReport {
    let sum = datum.scaling_sum();
    let scaling_ok = (sum - T::from_usize(datum.n)).abs() <= scaling_tolerance::<T>(datum.n);
    let non_surjective: Vec<usize> = datum
        .maps
        .iter()
        .enumerate()
        .filter(|(_, b)| numerical_rank(b).map_or(true, |r| r < b.rows()))
        .map(|(j, _)| j)
        .collect();
    let stacked_rank = Matrix::vstack(&datum.maps)
        .ok()
        .and_then(|s| numerical_rank(&s).ok())
        .unwrap_or(0);
    let common_kernel_dim = datum.n.saturating_sub(stacked_rank);
    let ok = scaling_ok && non_surjective.is_empty() && common_kernel_dim == 0;
    FeasibilityReport {
        scaling_sum: sum.as_f64(),
        n: datum.n,
        scaling_ok,
        non_surjective,
        common_kernel_dim,
        verdict: if ok {
            Feasibility::PossiblyFeasible
        } else {
            Feasibility::Infeasible
        },
    }
}
