//! Brascamp–Lieb data and the alternating scaling flow `Φ = φ ∘ ψ`.
//!
//! The flow drives a feasible datum towards a geometric one while the
//! telescoped product of its step factors converges to the BL constant. The
//! crate also ships gaussian lower-bound oracles, the adjoint BL sandwich
//! check and a library of data with known constants.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` / `*32` aliases below name the common instantiations.
//!
//! ```
//! use blscale_core::{bl_estimate, make_loomis_whitney, run_flow, FlowConfig64};
//!
//! let lw = make_loomis_whitney::<f64>(3).unwrap();
//! let trace = run_flow(&lw.datum, &FlowConfig64::default());
//! assert_eq!(bl_estimate(&trace).unwrap().value, 1.0);
//! ```

pub mod adjoint;
pub mod datum;
pub mod error;
pub mod flow;
pub mod gaussian;
pub mod io;
pub mod library;
pub mod linalg;
pub mod matrix;
pub mod normalize;
pub mod random;
pub mod scalar;

pub use adjoint::{
    abl_ratio, derive_adjoint_params, lp_norm_gaussian, pushforward_gaussian, sandwich_check,
    sandwich_family, AdjointParams, CenteredGaussian, SandwichConfig, SandwichReport,
};
pub use datum::{
    apply_equivalence, feasibility_check, geometricity, isotropy_defect, projection_defect, validate, Datum,
    Equivalence, Feasibility, FeasibilityReport, GeometricityReport, ValidationReport, Violation,
    DEFAULT_GEOMETRICITY_TOL,
};
pub use error::{Error, Result};
pub use flow::{
    bl_estimate, nearest_geometric, project_to_geometric, run_flow, BlEstimate, DivergenceCause, FlowConfig,
    FlowRecord, FlowTrace, Snapshot, Termination,
};
pub use gaussian::{
    gaussian_ratio, maximize_gaussian, maximize_gaussian_with, rank1_scalar_oracle, GaussianInput, GaussianMax,
    GaussianSearch,
};
pub use io::DatumFile;
pub use library::{
    make_holder, make_loomis_whitney, make_random_feasible, make_random_feasible_with, make_remark_datum,
    Expected, NamedDatum,
};
pub use matrix::Matrix;
pub use normalize::{big_phi, phi_step, psi_step, StepResult};
pub use scalar::Scalar;

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type Datum64 = Datum<f64>;
pub type Datum32 = Datum<f32>;
pub type FlowConfig64 = FlowConfig<f64>;
pub type FlowConfig32 = FlowConfig<f32>;
pub type FlowTrace64 = FlowTrace<f64>;
pub type FlowTrace32 = FlowTrace<f32>;
pub type AdjointParams64 = AdjointParams<f64>;
pub type CenteredGaussian64 = CenteredGaussian<f64>;
