//! The two normalising maps and their composition.
//!
//! * `ψ(B)_j = B_j M^{-1/2}` with `M = Σ c_j B_jᵀB_j` makes the datum isotropic.
//! * `φ(B)_j = M_j^{-1/2} B_j` with `M_j = B_jB_jᵀ` makes it projection-normalised.
//! * `Φ = φ ∘ ψ`.
//!
//! Each step also reports `log_scale = log[BL(output)/BL(input)]`, read off
//! from the change-of-variables rule for equivalent data:
//! `½ log det M` for ψ and `Σ (c_j/2) log det M_j` for φ.

use serde::Serialize;

use crate::datum::Datum;
use crate::error::Result;
use crate::linalg::{eigen_floor, sym_eig};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// The image of a datum under one normalising step.
#[derive(Clone, Debug, Serialize)]
pub struct StepResult<T: Scalar> {
    pub datum: Datum<T>,
    /// `log[BL(datum) / BL(input)]`.
    pub log_scale: T,
    /// Right intertwiner `T` of the step, so that the output maps are
    /// `T_j⁻¹ B_j T` for some left intertwiners `T_j`. Identity for φ.
    #[serde(skip)]
    pub transport: Matrix<T>,
}

/// `B_j ↦ B_j M^{-1/2}`. Fails with `NotPositiveDefinite` when the maps share
/// a kernel.
pub fn psi_step<T: Scalar>(datum: &Datum<T>) -> Result<StepResult<T>> {
    let m = datum.isotropy_matrix();
    let eig = sym_eig(&m)?;
    let p = eig.inv_sqrt(eigen_floor(&m))?;
    let log_scale = eig.log_det()? * T::lit(0.5);
    let maps = datum.maps().iter().map(|b| b * &p).collect();
    Ok(StepResult {
        datum: datum.with_maps(maps),
        log_scale,
        transport: p,
    })
}

/// `B_j ↦ (B_jB_jᵀ)^{-1/2} B_j`. Fails with `NotPositiveDefinite` when some
/// `B_j` is not surjective.
pub fn phi_step<T: Scalar>(datum: &Datum<T>) -> Result<StepResult<T>> {
    let half = T::lit(0.5);
    let mut log_scale = T::zero();
    let mut maps = Vec::with_capacity(datum.m());
    for (b, c) in datum.pairs() {
        let mj = b.outer_gram();
        let eig = sym_eig(&mj)?;
        let pj = eig.inv_sqrt(eigen_floor(&mj))?;
        log_scale += c * half * eig.log_det()?;
        maps.push(&pj * b);
    }
    Ok(StepResult {
        datum: datum.with_maps(maps),
        log_scale,
        transport: Matrix::identity(datum.n()),
    })
}

/// `Φ(B) = φ(ψ(B))`; the log-scales of the two halves add.
pub fn big_phi<T: Scalar>(datum: &Datum<T>) -> Result<StepResult<T>> {
    let psi = psi_step(datum)?;
    let phi = phi_step(&psi.datum)?;
    Ok(StepResult {
        datum: phi.datum,
        log_scale: psi.log_scale + phi.log_scale,
        transport: psi.transport,
    })
}
