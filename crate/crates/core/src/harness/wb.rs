use nalgebra::DVector;

use crate::coefficients::PeerCoefficients;
use crate::error::{Error, Result};
use crate::stepper::{integrate, step, SolverConfig, SplitProblem, StageBlock};

/// Largest stage drift allowed when starting exactly at the equilibrium.
pub const WB_EXACT_DRIFT_TOL: f64 = 1e-10;

/// Largest one-step `drift / eps` after perturbing the non-last stages by `eps`.
pub const WB_PERTURBATION_RATIO: f64 = 50.0;

/// Largest distance to the equilibrium at the end of the dynamic run.
pub const WB_DYNAMIC_DISTANCE: f64 = 1e-2;

pub const WB_DYNAMIC_T_END: f64 = 15.0;

/// Steps at the end of the dynamic run over which the distance must not grow.
pub const WB_MONOTONE_TAIL: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationResult {
    pub epsilon: f64,
    pub drift: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicWb {
    /// `(t, |u(t) - u*|_inf)` on the step grid.
    pub distances: Vec<(f64, f64)>,
    pub final_distance: f64,
    pub non_increasing_tail: bool,
}

impl DynamicWb {
    pub fn passed(&self) -> bool {
        self.final_distance <= WB_DYNAMIC_DISTANCE && self.non_increasing_tail
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WbReport {
    pub method: String,
    pub dt: f64,
    pub n_steps: usize,
    pub exact_drift: f64,
    pub perturbations: Vec<PerturbationResult>,
    pub dynamic: DynamicWb,
}

impl WbReport {
    pub fn exact_passed(&self) -> bool {
        self.exact_drift <= WB_EXACT_DRIFT_TOL
    }

    pub fn perturbation_passed(&self) -> bool {
        self.perturbations.iter().all(|p| p.ratio <= WB_PERTURBATION_RATIO)
    }

    pub fn passed(&self) -> bool {
        self.exact_passed() && self.perturbation_passed() && self.dynamic.passed()
    }
}

fn equilibrium_of(problem: &SplitProblem) -> Result<&DVector<f64>> {
    problem.equilibrium.as_ref().ok_or_else(|| {
        Error::InvalidArgument(format!("problem '{}' carries no equilibrium", problem.label))
    })
}

/// Largest stage change per step over `n_steps` steps started from `e ⊗ u*`.
pub fn wb_exact_drift(
    coeffs: &PeerCoefficients,
    problem: &SplitProblem,
    n_steps: usize,
    dt: f64,
    config: &SolverConfig,
) -> Result<f64> {
    let u_star = equilibrium_of(problem)?;
    let mut block = StageBlock::constant(problem, 0.0, dt, u_star, coeffs.stages())?;
    let mut drift = 0.0f64;
    for _ in 0..n_steps {
        let next = step(coeffs, problem, &block, config)?;
        drift = drift.max(next.max_difference(&block));
        block = next;
    }
    Ok(drift)
}

/// One step from `e ⊗ u*` with stage `i < s` shifted by `eps (-1)^(i+j)` in component `j`.
pub fn wb_perturbation(
    coeffs: &PeerCoefficients,
    problem: &SplitProblem,
    epsilon: f64,
    dt: f64,
    config: &SolverConfig,
) -> Result<PerturbationResult> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("perturbation must be positive, got {epsilon}")));
    }
    let u_star = equilibrium_of(problem)?;
    let s = coeffs.stages();
    let stages = (0..s)
        .map(|i| {
            let mut w = u_star.clone();
            if i + 1 < s {
                for (j, x) in w.iter_mut().enumerate() {
                    *x += if (i + j) % 2 == 0 { epsilon } else { -epsilon };
                }
            }
            w
        })
        .collect();
    let block = StageBlock::new(problem, 0.0, dt, stages)?;
    let next = step(coeffs, problem, &block, config)?;
    let drift = next.max_difference(&block);
    Ok(PerturbationResult {
        epsilon,
        drift,
        ratio: drift / epsilon,
    })
}

/// Distance to `u*` along the run from the problem's initial value up to `t = 15`.
pub fn wb_dynamic(
    coeffs: &PeerCoefficients,
    problem: &SplitProblem,
    dt: f64,
    config: &SolverConfig,
) -> Result<DynamicWb> {
    let u_star = equilibrium_of(problem)?;
    let u0 = problem.initial.as_ref().ok_or_else(|| {
        Error::InvalidArgument(format!("problem '{}' carries no initial value", problem.label))
    })?;
    let trajectory = integrate(coeffs, problem, u0, WB_DYNAMIC_T_END, dt, config)?;
    let distances: Vec<(f64, f64)> = trajectory.iter().map(|(t, u)| (t, (u - u_star).amax())).collect();
    let tail = &distances[distances.len().saturating_sub(WB_MONOTONE_TAIL + 1)..];
    Ok(DynamicWb {
        final_distance: distances.last().map_or(f64::INFINITY, |d| d.1),
        non_increasing_tail: tail.windows(2).all(|w| w[1].1 <= w[0].1),
        distances,
    })
}

/// Exact, perturbed and dynamic well-balancing checks at step size `dt`.
pub fn wb_test(
    coeffs: &PeerCoefficients,
    problem: &SplitProblem,
    n_steps: usize,
    dt: f64,
    perturbations: &[f64],
    config: &SolverConfig,
) -> Result<WbReport> {
    Ok(WbReport {
        method: coeffs.label(),
        dt,
        n_steps,
        exact_drift: wb_exact_drift(coeffs, problem, n_steps, dt, config)?,
        perturbations: perturbations
            .iter()
            .map(|&eps| wb_perturbation(coeffs, problem, eps, dt, config))
            .collect::<Result<_>>()?,
        dynamic: wb_dynamic(coeffs, problem, dt, config)?,
    })
}
