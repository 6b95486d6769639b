//! Time stepping for additively split systems `u' = F0(u) + F1(u)`.
//!
//! `F0` is treated explicitly and `F1` implicitly. Because `R` is lower triangular with
//! diagonal `gamma` and `Rhat = R S2` is strictly lower, the stages of a step are solved one
//! after another, each by a Newton iteration on `w = rhs_i + dt gamma F1(w)`.

mod newton;
mod start;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::coefficients::PeerCoefficients;
use crate::error::{Error, Result};

pub use newton::{fd_jacobian, newton_solve_stage, NewtonOutcome, StageSolveError};
pub use start::{initialize_stages, MAX_STARTING_DOUBLINGS};

pub type StateFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type SolutionFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// Equilibria must satisfy `|F0(u*) + F1(u*)| <= EQUILIBRIUM_TOL (1 + |u*|)`.
pub const EQUILIBRIUM_TOL: f64 = 1e-13;

/// Right-hand side pair `(F0, F1)` of dimension `dim`. Both maps must be pure.
#[derive(Clone)]
pub struct SplitProblem {
    pub label: String,
    pub dim: usize,
    pub f0: StateFn,
    pub f1: StateFn,
    pub jac1: Option<JacobianFn>,
    pub equilibrium: Option<DVector<f64>>,
    /// Exact solution `u(t)` from `t = 0`, used by the starting procedure when present.
    pub exact: Option<SolutionFn>,
    pub initial: Option<DVector<f64>>,
}

impl fmt::Debug for SplitProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SplitProblem")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("jac1", &self.jac1.is_some())
            .field("equilibrium", &self.equilibrium)
            .field("exact", &self.exact.is_some())
            .field("initial", &self.initial)
            .finish()
    }
}

impl SplitProblem {
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        f0: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        f1: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        SplitProblem {
            label: label.into(),
            dim,
            f0: Arc::new(f0),
            f1: Arc::new(f1),
            jac1: None,
            equilibrium: None,
            exact: None,
            initial: None,
        }
    }

    pub fn with_jacobian(
        mut self,
        jac1: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jac1 = Some(Arc::new(jac1));
        self
    }

    /// Attaches a steady state after checking `F0(u*) + F1(u*) = 0`.
    pub fn with_equilibrium(mut self, u_star: DVector<f64>) -> Result<Self> {
        self.check_dim(&u_star, "equilibrium")?;
        let defect = self.total_rhs(&u_star).amax();
        if !(defect <= EQUILIBRIUM_TOL * (1.0 + u_star.amax())) {
            return Err(Error::InvalidArgument(format!(
                "'{}': F0 + F1 does not vanish at the equilibrium (defect {defect:e})",
                self.label
            )));
        }
        self.equilibrium = Some(u_star);
        Ok(self)
    }

    pub fn with_exact(mut self, exact: impl Fn(f64) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.exact = Some(Arc::new(exact));
        self
    }

    pub fn with_initial(mut self, u0: DVector<f64>) -> Self {
        self.initial = Some(u0);
        self
    }

    pub fn total_rhs(&self, u: &DVector<f64>) -> DVector<f64> {
        (self.f0)(u) + (self.f1)(u)
    }

    /// Analytic Jacobian of `F1` if available, forward differences otherwise.
    pub fn jacobian_f1(&self, u: &DVector<f64>, eps_scale: f64) -> DMatrix<f64> {
        match &self.jac1 {
            Some(jac) => jac(u),
            None => fd_jacobian(&*self.f1, u, eps_scale),
        }
    }

    pub(crate) fn check_dim(&self, u: &DVector<f64>, what: &str) -> Result<()> {
        if u.len() != self.dim {
            return Err(Error::Dimension(format!(
                "{what} has length {}, problem '{}' has dimension {}",
                u.len(),
                self.label,
                self.dim
            )));
        }
        Ok(())
    }
}

/// Newton and starting-procedure settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub newton_abs_tol: f64,
    pub newton_rel_tol: f64,
    pub newton_max_iter: usize,
    pub fd_jacobian_eps_scale: f64,
    pub starting_substeps_initial: usize,
    pub starting_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton_abs_tol: 1e-12,
            newton_rel_tol: 1e-10,
            newton_max_iter: 25,
            fd_jacobian_eps_scale: f64::EPSILON.sqrt(),
            starting_substeps_initial: 16,
            starting_tol: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn check(&self) -> Result<()> {
        let positive = [
            ("newton_abs_tol", self.newton_abs_tol),
            ("newton_rel_tol", self.newton_rel_tol),
            ("fd_jacobian_eps_scale", self.fd_jacobian_eps_scale),
            ("starting_tol", self.starting_tol),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
        if self.newton_max_iter == 0 || self.starting_substeps_initial == 0 {
            return Err(Error::InvalidArgument(
                "newton_max_iter and starting_substeps_initial must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// The `s` stage values of one step, `stages[i] ~ u(t + c_i dt)`, with cached `F0`, `F1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageBlock {
    pub t: f64,
    pub dt: f64,
    pub stages: Vec<DVector<f64>>,
    pub f0: Vec<DVector<f64>>,
    pub f1: Vec<DVector<f64>>,
}

impl StageBlock {
    pub fn new(problem: &SplitProblem, t: f64, dt: f64, stages: Vec<DVector<f64>>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {dt}")));
        }
        for w in &stages {
            problem.check_dim(w, "stage value")?;
        }
        let f0 = stages.iter().map(|w| (problem.f0)(w)).collect();
        let f1 = stages.iter().map(|w| (problem.f1)(w)).collect();
        Ok(StageBlock {
            t,
            dt,
            stages,
            f0,
            f1,
        })
    }

    /// Every stage equal to `v`.
    pub fn constant(problem: &SplitProblem, t: f64, dt: f64, v: &DVector<f64>, s: usize) -> Result<Self> {
        StageBlock::new(problem, t, dt, vec![v.clone(); s])
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    /// Last stage, the approximation at `t + dt` since `c_s = 1`.
    pub fn last(&self) -> &DVector<f64> {
        self.stages.last().expect("stage block is never empty")
    }

    /// True when the cached right-hand sides equal fresh evaluations.
    pub fn cache_is_fresh(&self, problem: &SplitProblem) -> bool {
        self.stages.iter().zip(&self.f0).all(|(w, f)| (problem.f0)(w) == *f)
            && self.stages.iter().zip(&self.f1).all(|(w, f)| (problem.f1)(w) == *f)
    }

    /// Largest stage difference to another block of the same shape.
    pub fn max_difference(&self, other: &StageBlock) -> f64 {
        self.stages
            .iter()
            .zip(&other.stages)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }
}

/// Grid values `(t_k, u_k)` read off the last stage of each block.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: f64, u: DVector<f64>) {
        self.times.push(t);
        self.states.push(u);
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &DVector<f64>)> {
        self.times.iter().copied().zip(&self.states)
    }

    pub fn last(&self) -> Option<&DVector<f64>> {
        self.states.last()
    }
}

fn check_compatible(coeffs: &PeerCoefficients, problem: &SplitProblem, block: &StageBlock) -> Result<()> {
    if block.stage_count() != coeffs.stages() {
        return Err(Error::Dimension(format!(
            "block has {} stages, method has {}",
            block.stage_count(),
            coeffs.stages()
        )));
    }
    if let Some(c) = coeffs.nodes().as_slice().iter().find(|&&c| c < 0.0) {
        return Err(Error::InvalidNodes(format!(
            "negative node {c} would need stage values before the initial time"
        )));
    }
    for w in &block.stages {
        problem.check_dim(w, "stage value")?;
    }
    Ok(())
}

/// Advances a stage block by one step of the IMEX recurrence.
///
/// Stage `i` collects everything already known into
///
/// ```text
/// rhs_i = sum_j P_ij w_j + dt sum_j (Qhat_ij F0(w_j) + Q_ij F1(w_j))
///       + dt sum_{j<i} (Rhat_ij F0(v_j) + R_ij F1(v_j))
/// ```
///
/// and solves `v_i = rhs_i + dt gamma F1(v_i)`. Since `Pe = e`, the transfer term is summed
/// as `w_s + sum_j P_ij (w_j - w_s)`, which keeps rounding relative to the stage spread.
/// The Newton iteration starts from the
/// polynomial extrapolation of the old stages and, should that fail, from the last old stage.
pub fn step(
    coeffs: &PeerCoefficients,
    problem: &SplitProblem,
    block: &StageBlock,
    config: &SolverConfig,
) -> Result<StageBlock> {
    check_compatible(coeffs, problem, block)?;
    let s = coeffs.stages();
    let m = problem.dim;
    let dt = block.dt;
    let (p, q, r, qhat, rhat) = (coeffs.p(), coeffs.q(), coeffs.r(), coeffs.qhat(), coeffs.rhat());
    let predictor = coeffs.predictor();
    let dt_gamma = dt * coeffs.gamma();
    let jacobian = |w: &DVector<f64>| problem.jacobian_f1(w, config.fd_jacobian_eps_scale);

    let mut stages: Vec<DVector<f64>> = Vec::with_capacity(s);
    let mut f0_new: Vec<DVector<f64>> = Vec::with_capacity(s);
    let mut f1_new: Vec<DVector<f64>> = Vec::with_capacity(s);

    for i in 0..s {
        let mut increment = DVector::zeros(m);
        let mut guess = DVector::zeros(m);
        for j in 0..s {
            increment.axpy(p[(i, j)], &(&block.stages[j] - block.last()), 1.0);
            increment.axpy(dt * qhat[(i, j)], &block.f0[j], 1.0);
            increment.axpy(dt * q[(i, j)], &block.f1[j], 1.0);
            guess.axpy(predictor[(i, j)], &block.stages[j], 1.0);
        }
        for j in 0..i {
            increment.axpy(dt * rhat[(i, j)], &f0_new[j], 1.0);
            increment.axpy(dt * r[(i, j)], &f1_new[j], 1.0);
        }
        let rhs = block.last() + increment;

        let solved = newton_solve_stage(&*problem.f1, &rhs, guess, &jacobian, dt_gamma, config)
            .or_else(|_| {
                newton_solve_stage(&*problem.f1, &rhs, block.last().clone(), &jacobian, dt_gamma, config)
            })
            .map_err(|e| Error::Newton {
                stage: i + 1,
                reason: e.reason,
                residual: e.residual,
            })?;

        f0_new.push((problem.f0)(&solved.state));
        f1_new.push((problem.f1)(&solved.state));
        stages.push(solved.state);
    }

    Ok(StageBlock {
        t: block.t + dt,
        dt,
        stages,
        f0: f0_new,
        f1: f1_new,
    })
}

/// Runs `n_steps` steps from an existing block, recording the last stage after each.
pub fn integrate_block(
    coeffs: &PeerCoefficients,
    problem: &SplitProblem,
    block: StageBlock,
    n_steps: usize,
    config: &SolverConfig,
) -> Result<(Trajectory, StageBlock)> {
    config.check()?;
    let mut trajectory = Trajectory::default();
    let mut current = block;
    let t0 = current.t;
    for n in 0..n_steps {
        current = step(coeffs, problem, &current, config).map_err(|e| Error::Step {
            step: n + 1,
            source: Box::new(e),
        })?;
        trajectory.push(t0 + (n + 2) as f64 * current.dt, current.last().clone());
    }
    Ok((trajectory, current))
}

/// Number of steps of size `dt` covering `[0, t_end]`; partial final steps are rejected.
pub fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && t_end > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need t_end > 0 and dt > 0, got t_end = {t_end}, dt = {dt}"
        )));
    }
    let n = (t_end / dt).round();
    if n < 1.0 || (n * dt - t_end).abs() > 1e-12 * t_end.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "dt = {dt} does not divide the interval [0, {t_end}]"
        )));
    }
    Ok(n as usize)
}

/// Integrates from `u(0) = u0` to `t_end` with constant step `dt`.
///
/// The starting block places stage `i` at `c_i dt`, so its last stage is already the grid
/// value at `dt`. The returned trajectory holds the grid values at `dt, 2 dt, ..., t_end`.
pub fn integrate(
    coeffs: &PeerCoefficients,
    problem: &SplitProblem,
    u0: &DVector<f64>,
    t_end: f64,
    dt: f64,
    config: &SolverConfig,
) -> Result<Trajectory> {
    let n = step_count(t_end, dt)?;
    let start = initialize_stages(coeffs, problem, u0, dt, config)?;
    let mut trajectory = Trajectory::default();
    trajectory.push(dt, start.last().clone());
    let (rest, _) = integrate_block(coeffs, problem, start, n - 1, config)?;
    trajectory.times.extend(rest.times);
    trajectory.states.extend(rest.states);
    Ok(trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{construct_order_s, ConstructionInputs, NodeVector};
    use approx::assert_abs_diff_eq;

    fn backward_euler() -> PeerCoefficients {
        construct_order_s(
            &ConstructionInputs::new(NodeVector::new(vec![1.0]).unwrap()).with_gamma(1.0),
        )
        .unwrap()
    }

    fn decay() -> SplitProblem {
        SplitProblem::new("decay", 1, |u| DVector::zeros(u.len()), |u| -u)
    }

    fn scalar(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn backward_euler_single_step() {
        let problem = decay();
        let block = StageBlock::new(&problem, 0.0, 0.5, vec![scalar(1.0)]).unwrap();
        let next = step(&backward_euler(), &problem, &block, &SolverConfig::default()).unwrap();
        assert_abs_diff_eq!(next.last()[0], 1.0 / 1.5, epsilon = 1e-15);
        let after = step(&backward_euler(), &problem, &next, &SolverConfig::default()).unwrap();
        assert_abs_diff_eq!(after.last()[0], 4.0 / 9.0, epsilon = 1e-15);
        assert!(after.cache_is_fresh(&problem));
        assert_eq!(after.t, 1.0);
    }

    #[test]
    fn integrate_reads_the_last_stage() {
        // The starting block resolves u(dt) = exp(-dt); one backward Euler step follows.
        let traj = integrate(&backward_euler(), &decay(), &scalar(1.0), 1.0, 0.5, &SolverConfig::default()).unwrap();
        assert_eq!(traj.times, vec![0.5, 1.0]);
        let start = (-0.5f64).exp();
        assert_abs_diff_eq!(traj.states[0][0], start, epsilon = 1e-11);
        assert_abs_diff_eq!(traj.states[1][0], start / 1.5, epsilon = 1e-11);
    }

    #[test]
    fn step_count_rejects_partial_steps() {
        assert_eq!(step_count(5.0, 0.2).unwrap(), 25);
        assert_eq!(step_count(5.0, 0.0125).unwrap(), 400);
        assert!(step_count(1.0, 0.3).is_err());
        assert!(step_count(-1.0, 0.1).is_err());
    }

    #[test]
    fn stage_count_mismatch() {
        let problem = decay();
        let block = StageBlock::new(&problem, 0.0, 0.5, vec![scalar(1.0), scalar(1.0)]).unwrap();
        assert!(matches!(
            step(&backward_euler(), &problem, &block, &SolverConfig::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn equilibrium_invariant_is_checked() {
        let p = SplitProblem::new("shift", 1, |_| DVector::from_element(1, 1.0), |u| -u);
        assert!(p.clone().with_equilibrium(scalar(1.0)).is_ok());
        assert!(p.with_equilibrium(scalar(0.5)).is_err());
    }

    #[test]
    fn config_check() {
        assert!(SolverConfig::default().check().is_ok());
        let bad = SolverConfig {
            newton_abs_tol: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.check().is_err());
    }
}
