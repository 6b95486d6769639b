use nalgebra::{DMatrix, DVector};

use super::SolverConfig;
use crate::error::NewtonFailure;

/// Why a stage solve stopped, with the last residual norm seen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageSolveError {
    pub reason: NewtonFailure,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub state: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Forward differences with per-column increment `eps_scale * (1 + |u_j|)`.
pub fn fd_jacobian(
    f: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    u: &DVector<f64>,
    eps_scale: f64,
) -> DMatrix<f64> {
    let base = f(u);
    let m = u.len();
    let mut jac = DMatrix::zeros(base.len(), m);
    let mut shifted = u.clone();
    for j in 0..m {
        let uj = u[j];
        shifted[j] = uj + eps_scale * (1.0 + uj.abs());
        // Use the increment that was actually representable.
        let h = shifted[j] - uj;
        let column = (f(&shifted) - &base) / h;
        jac.set_column(j, &column);
        shifted[j] = uj;
    }
    jac
}

/// Solves `w = rhs + dt_gamma * F1(w)` by a simplified Newton iteration.
///
/// The iteration matrix `I - dt_gamma J` is factored once and refreshed only when the
/// residual contracts by less than a factor 2. Convergence is declared when the residual
/// `w - rhs - dt_gamma F1(w)` or the last Newton correction drops below
/// `abs_tol + rel_tol |w|` in the max norm. A guess is returned unchanged only when its
/// residual is within `abs_tol`, so an accurate predictor still gets one correction.
pub fn newton_solve_stage(
    f1: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    rhs: &DVector<f64>,
    guess: DVector<f64>,
    jacobian: &dyn Fn(&DVector<f64>) -> DMatrix<f64>,
    dt_gamma: f64,
    config: &SolverConfig,
) -> Result<NewtonOutcome, StageSolveError> {
    let m = rhs.len();
    let tol = |w: &DVector<f64>| config.newton_abs_tol + config.newton_rel_tol * w.amax();
    let residual_of = |w: &DVector<f64>| w - rhs - f1(w) * dt_gamma;
    let fail = |reason, residual| StageSolveError { reason, residual };

    let mut w = guess;
    let mut r = residual_of(&w);
    let mut norm = r.amax();
    if !norm.is_finite() {
        return Err(fail(NewtonFailure::NonFinite, norm));
    }
    if norm <= config.newton_abs_tol {
        return Ok(NewtonOutcome {
            state: w,
            iterations: 0,
            residual: norm,
        });
    }

    let factor = |w: &DVector<f64>| {
        let iteration = DMatrix::identity(m, m) - jacobian(w) * dt_gamma;
        let lu = iteration.lu();
        if lu.is_invertible() {
            Some(lu)
        } else {
            None
        }
    };
    let mut lu = factor(&w).ok_or(fail(NewtonFailure::SingularMatrix, norm))?;
    let mut growth = 0;

    for iteration in 1..=config.newton_max_iter {
        let delta = lu
            .solve(&r)
            .ok_or(fail(NewtonFailure::SingularMatrix, norm))?;
        w -= &delta;
        r = residual_of(&w);
        let next = r.amax();
        if !next.is_finite() || !w.amax().is_finite() {
            return Err(fail(NewtonFailure::NonFinite, next));
        }
        let limit = tol(&w);
        if next <= limit || delta.amax() <= limit {
            return Ok(NewtonOutcome {
                state: w,
                iterations: iteration,
                residual: next,
            });
        }
        if next > norm {
            growth += 1;
            if growth >= 3 {
                return Err(fail(NewtonFailure::Divergence, next));
            }
        } else {
            growth = 0;
        }
        if next > 0.5 * norm {
            lu = factor(&w).ok_or(fail(NewtonFailure::SingularMatrix, next))?;
        }
        norm = next;
    }
    Err(fail(NewtonFailure::MaxIterations, norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn config() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn fd_jacobian_of_rotation() {
        let f = |u: &DVector<f64>| DVector::from_vec(vec![u[1], -u[0]]);
        let jac = fd_jacobian(&f, &DVector::from_vec(vec![0.3, -2.0]), config().fd_jacobian_eps_scale);
        assert_abs_diff_eq!(jac, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]), epsilon = 1e-7);
    }

    #[test]
    fn fd_jacobian_of_relaxation_source() {
        // d/du [0, sin u1 - u2] at the origin.
        let f = |u: &DVector<f64>| DVector::from_vec(vec![0.0, u[0].sin() - u[1]]);
        let jac = fd_jacobian(&f, &DVector::zeros(2), config().fd_jacobian_eps_scale);
        assert_abs_diff_eq!(jac, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, -1.0]), epsilon = 1e-7);
    }

    #[test]
    fn fd_jacobian_of_constant_is_zero() {
        let f = |_: &DVector<f64>| DVector::from_vec(vec![3.0, -1.0]);
        let jac = fd_jacobian(&f, &DVector::from_vec(vec![1.0, 2.0]), 1e-8);
        assert_eq!(jac, DMatrix::zeros(2, 2));
    }

    #[test]
    fn linear_source_needs_one_iteration() {
        let b = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 0.5, -3.0]);
        let f1 = |u: &DVector<f64>| &b * u;
        let jac = |_: &DVector<f64>| b.clone();
        let rhs = DVector::from_vec(vec![1.0, 2.0]);
        let out = newton_solve_stage(&f1, &rhs, rhs.clone(), &jac, 0.3, &config()).unwrap();
        assert_eq!(out.iterations, 1);
        let defect = &out.state - &rhs - f1(&out.state) * 0.3;
        assert!(defect.amax() < 1e-14);
    }

    #[test]
    fn accurate_guess_is_still_corrected() {
        let f1 = |u: &DVector<f64>| u.map(|v| v.sin());
        let jac = |u: &DVector<f64>| DMatrix::from_diagonal(&u.map(|v| v.cos()));
        let root = DVector::from_vec(vec![0.5]);
        let rhs = &root - f1(&root) * 0.2;
        let out = newton_solve_stage(&f1, &rhs, root.add_scalar(1e-11), &jac, 0.2, &config()).unwrap();
        assert_eq!(out.iterations, 1);
        assert!((&out.state - &root).amax() <= 1e-15);
    }

    #[test]
    fn zero_source_returns_rhs() {
        let f1 = |u: &DVector<f64>| DVector::zeros(u.len());
        let jac = |u: &DVector<f64>| DMatrix::zeros(u.len(), u.len());
        let rhs = DVector::from_vec(vec![0.7, -1.25]);
        let from_rhs = newton_solve_stage(&f1, &rhs, rhs.clone(), &jac, 0.5, &config()).unwrap();
        assert_eq!(from_rhs.iterations, 0);
        assert_eq!(from_rhs.state, rhs);
        let from_other =
            newton_solve_stage(&f1, &rhs, DVector::from_vec(vec![3.0, 3.0]), &jac, 0.5, &config()).unwrap();
        assert_eq!(from_other.iterations, 1);
        assert_abs_diff_eq!(from_other.state, rhs, epsilon = 1e-15);
    }

    #[test]
    fn singular_iteration_matrix_is_reported() {
        // I - 1.0 * I = 0
        let f1 = |u: &DVector<f64>| u.clone();
        let jac = |u: &DVector<f64>| DMatrix::identity(u.len(), u.len());
        let rhs = DVector::from_vec(vec![1.0]);
        let err = newton_solve_stage(&f1, &rhs, DVector::from_vec(vec![0.0]), &jac, 1.0, &config()).unwrap_err();
        assert_eq!(err.reason, NewtonFailure::SingularMatrix);
    }

    #[test]
    fn iteration_limit_is_reported() {
        // A Jacobian with the wrong sign leaves the iteration stuck.
        let f1 = |u: &DVector<f64>| u.map(|v| -v.powi(3));
        let jac = |u: &DVector<f64>| DMatrix::from_diagonal(&u.map(|v| 3.0 * v * v));
        let rhs = DVector::from_vec(vec![1.0]);
        let cfg = SolverConfig {
            newton_max_iter: 2,
            ..config()
        };
        let err = newton_solve_stage(&f1, &rhs, DVector::from_vec(vec![5.0]), &jac, 0.1, &cfg).unwrap_err();
        assert!(matches!(
            err.reason,
            NewtonFailure::MaxIterations | NewtonFailure::Divergence | NewtonFailure::NonFinite
        ));
    }
}
