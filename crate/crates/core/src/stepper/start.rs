use nalgebra::DVector;

use super::{newton_solve_stage, SolverConfig, SplitProblem, StageBlock};
use crate::coefficients::PeerCoefficients;
use crate::error::{Error, Result};
use crate::harness::scaled_max_difference;

/// Upper bound on substep doublings per stage.
pub const MAX_STARTING_DOUBLINGS: usize = 12;

/// Columns kept in the extrapolation table.
const MAX_EXTRAPOLATION_COLUMNS: usize = 8;

/// `K` steps of `u+ = u + h F0(u) + h F1(u+)` over an interval of length `length`.
fn imex_euler(
    problem: &SplitProblem,
    u0: &DVector<f64>,
    length: f64,
    substeps: usize,
    config: &SolverConfig,
) -> std::result::Result<DVector<f64>, super::StageSolveError> {
    let h = length / substeps as f64;
    let jacobian = |w: &DVector<f64>| problem.jacobian_f1(w, config.fd_jacobian_eps_scale);
    let mut u = u0.clone();
    for _ in 0..substeps {
        let rhs = &u + (problem.f0)(&u) * h;
        u = newton_solve_stage(&*problem.f1, &rhs, u, &jacobian, h, config)?.state;
    }
    Ok(u)
}

/// Value at `t = length` from IMEX Euler runs with `K, 2K, 4K, ...` substeps, combined in an
/// extrapolation table that removes successive powers of the substep size.
fn extrapolated_value(
    problem: &SplitProblem,
    u0: &DVector<f64>,
    length: f64,
    stage: usize,
    config: &SolverConfig,
) -> Result<DVector<f64>> {
    let newton_err = |e: super::StageSolveError| Error::Newton {
        stage,
        reason: e.reason,
        residual: e.residual,
    };
    let mut substeps = config.starting_substeps_initial;
    let mut previous_row = vec![imex_euler(problem, u0, length, substeps, config).map_err(newton_err)?];
    let mut difference = f64::INFINITY;
    for _ in 0..MAX_STARTING_DOUBLINGS {
        substeps *= 2;
        let mut row = vec![imex_euler(problem, u0, length, substeps, config).map_err(newton_err)?];
        for j in 1..=previous_row.len().min(MAX_EXTRAPOLATION_COLUMNS - 1) {
            let factor = f64::from(2u32.pow(j as u32)) - 1.0;
            let refined = &row[j - 1] + (&row[j - 1] - &previous_row[j - 1]) / factor;
            row.push(refined);
        }
        let best = row.last().expect("row is never empty");
        let best_previous = previous_row.last().expect("row is never empty");
        difference = scaled_max_difference(best, best_previous);
        if difference <= config.starting_tol {
            return Ok(best.clone());
        }
        previous_row = row;
    }
    Err(Error::Starting {
        stage,
        doublings: MAX_STARTING_DOUBLINGS,
        difference,
    })
}

/// First stage block, anchored at `t = 0`, with stage `i` approximating `u(c_i dt)`.
///
/// Uses the problem's exact solution when it has one. Otherwise every stage is integrated
/// from `u0` by sub-stepped IMEX Euler, doubling the substep count from
/// `starting_substeps_initial` and extrapolating until two successive table diagonals agree
/// to `starting_tol` in the scaled max norm.
pub fn initialize_stages(
    coeffs: &PeerCoefficients,
    problem: &SplitProblem,
    u0: &DVector<f64>,
    dt: f64,
    config: &SolverConfig,
) -> Result<StageBlock> {
    config.check()?;
    problem.check_dim(u0, "initial value")?;
    coeffs.nodes().check_unit_interval()?;
    let c = coeffs.nodes();
    let stages = (0..coeffs.stages())
        .map(|i| {
            let length = c[i] * dt;
            if let Some(exact) = &problem.exact {
                Ok(exact(length))
            } else if length == 0.0 {
                Ok(u0.clone())
            } else {
                extrapolated_value(problem, u0, length, i + 1, config)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    StageBlock::new(problem, 0.0, dt, stages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{construct_order_s, ConstructionInputs, NodeVector};
    use approx::assert_abs_diff_eq;

    fn method() -> PeerCoefficients {
        construct_order_s(&ConstructionInputs::new(
            NodeVector::new(vec![0.0, 0.5, 1.0]).unwrap(),
        ))
        .unwrap()
    }

    fn oscillator() -> SplitProblem {
        // u1' = u2, u2' = -u1 split into explicit and implicit halves.
        SplitProblem::new(
            "oscillator",
            2,
            |u| DVector::from_vec(vec![u[1], 0.0]),
            |u| DVector::from_vec(vec![0.0, -u[0]]),
        )
    }

    #[test]
    fn zero_node_copies_initial_value() {
        let u0 = DVector::from_vec(vec![1.0, 0.0]);
        let block = initialize_stages(&method(), &oscillator(), &u0, 0.2, &SolverConfig::default()).unwrap();
        assert_eq!(block.stages[0], u0);
    }

    #[test]
    fn stages_match_exact_rotation() {
        let u0 = DVector::from_vec(vec![1.0, 0.0]);
        let dt = 0.2;
        let block = initialize_stages(&method(), &oscillator(), &u0, dt, &SolverConfig::default()).unwrap();
        for (i, c) in [0.0, 0.5, 1.0].into_iter().enumerate() {
            let t = c * dt;
            assert_abs_diff_eq!(block.stages[i][0], t.cos(), epsilon = 1e-11);
            assert_abs_diff_eq!(block.stages[i][1], -t.sin(), epsilon = 1e-11);
        }
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let problem = SplitProblem::new(
            "relax",
            1,
            |_| DVector::from_element(1, 0.5),
            |u| DVector::from_element(1, 1.0 - u[0]) * 0.5,
        );
        let u0 = DVector::from_element(1, 2.0);
        let block = initialize_stages(&method(), &problem, &u0, 0.7, &SolverConfig::default()).unwrap();
        for w in &block.stages {
            assert_abs_diff_eq!(w[0], 2.0, epsilon = 1e-12);
        }
    }
}
