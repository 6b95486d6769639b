use super::{least_squares_slope, scaled_max_error};
use crate::coefficients::PeerCoefficients;
use crate::error::{Error, Result};
use crate::relaxation::{equilibrium_residual, limit_problem, well_prepared_data, RelaxationProblem};
use crate::stepper::{integrate, SolverConfig};

/// Scaled distance allowed between the projected full run and the limit run.
pub const AP_GAP_TOL: f64 = 1e-5;

/// Largest `|G(U_n)|` allowed on the recorded states.
pub const AP_RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ApEntry {
    pub epsilon: f64,
    pub residual: f64,
    pub projection_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApReport {
    pub method: String,
    pub problem: String,
    pub dt: f64,
    pub t_end: f64,
    pub entries: Vec<ApEntry>,
    /// Slope of `log(residual)` against `log(eps)`; needs two entries with positive residual.
    pub residual_slope: Option<f64>,
}

impl ApReport {
    pub fn entry(&self, epsilon: f64) -> Option<&ApEntry> {
        self.entries.iter().find(|e| e.epsilon == epsilon)
    }
}

/// Runs the full relaxation system for each `eps` from well-prepared data and compares its
/// conserved projection with the same method applied to the limit system.
pub fn ap_test(
    coeffs: &PeerCoefficients,
    factory: &dyn Fn(f64) -> Result<RelaxationProblem>,
    epsilons: &[f64],
    dt: f64,
    t_end: f64,
    config: &SolverConfig,
) -> Result<ApReport> {
    let first = epsilons
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty epsilon list".into()))?;
    let template = factory(*first)?;
    let limit = limit_problem(&template);
    let v0 = limit.initial.clone().ok_or_else(|| {
        Error::InvalidArgument(format!("problem '{}' carries no initial value", template.full.label))
    })?;
    let limit_run = integrate(coeffs, &limit, &v0, t_end, dt, config)?;

    let mut entries = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let rp = factory(eps)?;
        let u0 = well_prepared_data(&rp, &v0)?;
        let run = integrate(coeffs, &rp.full, &u0, t_end, dt, config)?;
        entries.push(ApEntry {
            epsilon: eps,
            residual: equilibrium_residual(&rp, &run)?,
            projection_gap: scaled_max_error(&rp.structure.project_trajectory(&run), &limit_run)?,
        });
    }

    let logs: Vec<(f64, f64)> = entries
        .iter()
        .filter(|e| e.residual > 0.0)
        .map(|e| (e.epsilon.ln(), e.residual.ln()))
        .collect();
    Ok(ApReport {
        method: coeffs.label(),
        problem: template.full.label.clone(),
        dt,
        t_end,
        entries,
        residual_slope: (logs.len() >= 2).then(|| least_squares_slope(&logs)),
    })
}
