//! Iteration of `Φ`, with per-step diagnostics and a telescoping estimate of
//! the Brascamp–Lieb constant.
//!
//! Writing `X_k` for the k-th iterate, every step satisfies
//! `BL(X_k) = BL(X_{k-1}) · exp(log_scale_k)`, so with
//! `cum_k = Σ_{i≤k} log_scale_i` we get `BL(B) = BL(X_k) · exp(−cum_k)`.
//! Since `BL(X_k) → 1` along the flow and `BL(X_k) ≥ 1` on projection-normalised
//! iterates, `exp(−cum_k)` is a lower bound on `BL(B)` that converges to it.

use std::io::Write;

use log::debug;
use serde::Serialize;

use crate::datum::{
    feasibility_check, isotropy_defect, projection_defect, Datum, FeasibilityReport,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::normalize::{big_phi, phi_step};
use crate::scalar::Scalar;

const STALL_WINDOW: usize = 10;
const SNAPSHOT_BUDGET: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowConfig<T> {
    pub max_iters: usize,
    /// Target for the isotropy defect.
    pub geo_tol: T,
    /// Minimum average per-iteration decrease of the cumulative log-scale
    /// over the last ten iterations before the run is declared stalled.
    pub stall_tol: T,
}

impl<T: Scalar> Default for FlowConfig<T> {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            geo_tol: T::lit(1e-10),
            stall_tol: T::lit(1e-14),
        }
    }
}

impl<T: Scalar> FlowConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if !(self.geo_tol > T::zero()) || !(self.stall_tol > T::zero()) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the trace; `k` indexes the iterate `X_k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowRecord<T> {
    pub k: usize,
    pub isotropy_defect: T,
    /// `log[BL(X_k)/BL(X_{k-1})]`; at `k = 0` the log-scale of the initial
    /// φ-step, or zero when none was needed.
    pub log_scale: T,
    pub cumulative_log_scale: T,
    /// `exp(−cumulative_log_scale)`.
    pub bl_estimate: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "cause", rename_all = "snake_case")]
pub enum DivergenceCause {
    /// A normalising step met a singular Gram matrix.
    NotPositiveDefinite { iteration: usize, min_eigenvalue: f64 },
    /// A step produced non-finite entries.
    NonFinite { iteration: usize },
    /// `Σ c_j n_j ≠ n`, so the isotropy defect of every projection-normalised
    /// iterate is at least `(Σ c_j n_j − n)²/n`, which exceeds the target.
    ScalingCondition { scaling_sum: f64, n: usize, defect_lower_bound: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    Diverged(DivergenceCause),
    Stalled,
}

impl Termination {
    pub fn is_converged(&self) -> bool {
        matches!(self, Termination::Converged)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIters => "max_iters",
            Termination::Diverged(_) => "diverged",
            Termination::Stalled => "stalled",
        }
    }
}

impl std::fmt::Display for DivergenceCause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DivergenceCause::NotPositiveDefinite {
                iteration,
                min_eigenvalue,
            } => write!(
                f,
                "singular Gram matrix at iteration {iteration} (smallest eigenvalue {min_eigenvalue:e})"
            ),
            DivergenceCause::NonFinite { iteration } => write!(f, "non-finite entries at iteration {iteration}"),
            DivergenceCause::ScalingCondition {
                scaling_sum,
                n,
                defect_lower_bound,
            } => write!(
                f,
                "sum c_j n_j = {scaling_sum} differs from n = {n}; isotropy defect stays above {defect_lower_bound:e}"
            ),
        }
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Termination::Diverged(cause) => write!(f, "diverged: {cause}"),
            other => f.write_str(other.label()),
        }
    }
}

/// A stored iterate `X_k` together with the accumulated right intertwiner
/// `S_k`: `X_k,j = S_j⁻¹ B_j S_k` for suitable `S_j`.
#[derive(Clone, Debug, Serialize)]
pub struct Snapshot<T: Scalar> {
    pub k: usize,
    pub isotropy_defect: T,
    pub datum: Datum<T>,
    pub transport: Matrix<T>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowTrace<T: Scalar> {
    pub config: FlowConfig<T>,
    pub initial_phi_applied: bool,
    pub feasibility: FeasibilityReport,
    pub records: Vec<FlowRecord<T>>,
    pub first: Snapshot<T>,
    pub best: Snapshot<T>,
    pub last: Snapshot<T>,
    /// Every `⌈max_iters/32⌉`-th iterate.
    pub samples: Vec<Snapshot<T>>,
    pub termination: Termination,
}

impl<T: Scalar> FlowTrace<T> {
    pub fn final_record(&self) -> &FlowRecord<T> {
        self.records.last().expect("trace always holds the k = 0 record")
    }

    /// Number of `Φ` applications performed.
    pub fn iterations(&self) -> usize {
        self.final_record().k
    }

    /// Writes the per-iteration records as CSV with header
    /// `k,isotropy_defect,log_scale,cumulative_log_scale,bl_estimate`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }
}

fn record<T: Scalar>(k: usize, defect: T, log_scale: T, cum: T) -> FlowRecord<T> {
    FlowRecord {
        k,
        isotropy_defect: defect,
        log_scale,
        cumulative_log_scale: cum,
        bl_estimate: (-cum).exp(),
    }
}

fn divergence(iteration: usize, err: &Error) -> DivergenceCause {
    match err {
        Error::NotPositiveDefinite { min_eigenvalue } => DivergenceCause::NotPositiveDefinite {
            iteration,
            min_eigenvalue: *min_eigenvalue,
        },
        _ => DivergenceCause::NonFinite { iteration },
    }
}

/// Runs the scaling flow from `datum`.
///
/// If the input is not projection-normalised (projection defect above
/// `geo_tol`) a φ-step is applied first and accounted for in the `k = 0`
/// record. Iteration stops on convergence (isotropy defect below `geo_tol`),
/// on a singular step, on stalling of the cumulative log-scale, or after
/// `max_iters` applications of `Φ`. Failures are encoded in
/// [`FlowTrace::termination`].
pub fn run_flow<T: Scalar>(datum: &Datum<T>, config: &FlowConfig<T>) -> FlowTrace<T> {
    let feasibility = feasibility_check(datum);
    let n = datum.n();
    let stride = config.max_iters.div_ceil(SNAPSHOT_BUDGET).max(1);

    let mut current = datum.clone();
    let mut log0 = T::zero();
    let mut initial_phi_applied = false;
    let mut early_stop = None;
    if projection_defect(datum) > config.geo_tol {
        match phi_step(datum) {
            Ok(step) => {
                current = step.datum;
                log0 = step.log_scale;
                initial_phi_applied = true;
            }
            Err(e) => early_stop = Some(Termination::Diverged(divergence(0, &e))),
        }
    }

    let mut defect = isotropy_defect(&current);
    let mut cum = log0;
    let mut transport = Matrix::identity(n);
    let mut records = vec![record(0, defect, log0, cum)];
    let snap = |k, defect, d: &Datum<T>, s: &Matrix<T>| Snapshot {
        k,
        isotropy_defect: defect,
        datum: d.clone(),
        transport: s.clone(),
    };
    let first = snap(0, defect, &current, &transport);
    let mut best = first.clone();
    let mut samples = Vec::new();

    if early_stop.is_none() && !feasibility.scaling_ok {
        let gap = feasibility.scaling_sum - n as f64;
        let bound = gap * gap / n as f64;
        if bound >= config.geo_tol.as_f64() {
            early_stop = Some(Termination::Diverged(DivergenceCause::ScalingCondition {
                scaling_sum: feasibility.scaling_sum,
                n,
                defect_lower_bound: bound,
            }));
        }
    }

    let mut k = 0;
    let termination = match early_stop {
        Some(t) => t,
        None => loop {
            if defect < config.geo_tol {
                break Termination::Converged;
            }
            if k == config.max_iters {
                break Termination::MaxIters;
            }
            let step = match big_phi(&current) {
                Ok(step) if step.datum.maps().iter().all(Matrix::is_finite) => step,
                Ok(_) => break Termination::Diverged(DivergenceCause::NonFinite { iteration: k + 1 }),
                Err(e) => break Termination::Diverged(divergence(k + 1, &e)),
            };
            k += 1;
            current = step.datum;
            transport = &transport * &step.transport;
            cum += step.log_scale;
            defect = isotropy_defect(&current);
            records.push(record(k, defect, step.log_scale, cum));

            if defect < best.isotropy_defect {
                best = snap(k, defect, &current, &transport);
            }
            if k % stride == 0 {
                samples.push(snap(k, defect, &current, &transport));
                debug!("flow k={k} defect={defect:e} cum_log_scale={cum}");
            }
            if k >= STALL_WINDOW {
                let decrease = records[k - STALL_WINDOW].cumulative_log_scale - cum;
                if decrease < config.stall_tol * T::from_usize(STALL_WINDOW) {
                    break Termination::Stalled;
                }
            }
        },
    };
    debug!("flow finished after {k} iterations: {termination}");

    FlowTrace {
        config: config.clone(),
        initial_phi_applied,
        feasibility,
        records,
        first,
        best,
        last: snap(k, defect, &current, &transport),
        samples,
        termination,
    }
}

/// The iterate with the smallest isotropy defect seen along the flow.
pub fn nearest_geometric<T: Scalar>(trace: &FlowTrace<T>) -> (Datum<T>, T) {
    (trace.best.datum.clone(), trace.best.isotropy_defect)
}

/// Turns a near-geometric, projection-normalised datum into an exact-to-rounding
/// geometric one: one ψ-step, one φ-step, then a second φ pass to
/// re-orthonormalise rows (the polar factor of each `B_j`).
pub fn project_to_geometric<T: Scalar>(datum: &Datum<T>) -> Result<Datum<T>> {
    let pd = projection_defect(datum);
    if !(pd < T::lit(1e-6)) {
        return Err(Error::Precondition(format!(
            "project_to_geometric needs projection defect below 1e-6, got {pd:e}"
        )));
    }
    let psi = crate::normalize::psi_step(datum)?;
    let phi = phi_step(&psi.datum)?;
    Ok(phi_step(&phi.datum)?.datum)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlEstimate<T> {
    pub value: T,
    pub log_value: T,
    /// The telescoped product itself: a lower bound because every
    /// projection-normalised iterate has BL constant at least one.
    pub lower_confidence: T,
}

/// BL constant estimate from a converged trace.
pub fn bl_estimate<T: Scalar>(trace: &FlowTrace<T>) -> Result<BlEstimate<T>> {
    if !trace.termination.is_converged() {
        return Err(Error::NotConverged(trace.termination.to_string()));
    }
    // `0 − x` rather than `−x` so an untouched geometric datum reports +0.
    let log_value = T::zero() - trace.final_record().cumulative_log_scale;
    let value = log_value.exp();
    Ok(BlEstimate {
        value,
        log_value,
        lower_confidence: value,
    })
}
