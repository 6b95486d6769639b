//! Experiment drivers: error norms, reference solutions, convergence studies, and the
//! well-balanced and asymptotic-preserving checks.

mod ap;
mod convergence;
mod csv;
mod wb;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::stepper::Trajectory;

pub use ap::{ap_test, ApEntry, ApReport, AP_GAP_TOL, AP_RESIDUAL_TOL};
pub use convergence::{
    convergence_study, fit_order, reference_solution, sweep_step_sizes, ConvergenceEntry,
    ConvergenceReport, MethodSource, RunSpec, DEFAULT_REFERENCE_TOL, MAX_REFERENCE_DOUBLINGS,
    MIN_REFERENCE_TOL,
};
pub use csv::{convergence_csv, trajectory_csv, write_convergence_csv, write_trajectory_csv};
pub use wb::{
    wb_dynamic, wb_exact_drift, wb_perturbation, wb_test, DynamicWb, PerturbationResult, WbReport,
    WB_DYNAMIC_DISTANCE, WB_DYNAMIC_T_END, WB_EXACT_DRIFT_TOL, WB_MONOTONE_TAIL,
    WB_PERTURBATION_RATIO,
};

/// `max_i |a_i - b_i| / (1 + |b_i|)`, with `b` the reference.
pub fn scaled_max_difference(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, r)| (x - r).abs() / (1.0 + r.abs()))
        .fold(0.0, f64::max)
}

/// Scaled maximum error over all grid points; `reference` supplies the denominators.
pub fn scaled_max_error(approx: &Trajectory, reference: &Trajectory) -> Result<f64> {
    if approx.len() != reference.len() {
        return Err(Error::GridMismatch(format!(
            "{} grid points against {} reference points",
            approx.len(),
            reference.len()
        )));
    }
    let mut err = 0.0f64;
    for ((ta, ua), (tr, ur)) in approx.iter().zip(reference.iter()) {
        if (ta - tr).abs() > 1e-12 * ta.abs().max(1.0) {
            return Err(Error::GridMismatch(format!("time {ta} against reference time {tr}")));
        }
        if ua.len() != ur.len() {
            return Err(Error::GridMismatch(format!(
                "state of length {} against reference length {}",
                ua.len(),
                ur.len()
            )));
        }
        err = err.max(scaled_max_difference(ua, ur));
    }
    Ok(err)
}

/// Least-squares slope of `y` against `x`.
pub(crate) fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
