use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;

use super::{least_squares_slope, scaled_max_error};
use crate::coefficients::{builtin, load_coefficients, PeerCoefficients, MAX_BUILTIN_STAGES};
use crate::error::{Error, Result};
use crate::problems::{build_problem, ProblemKind, ProblemParams};
use crate::stepper::{integrate, step_count, SolverConfig, SplitProblem, Trajectory};

/// Refinement limit for [`reference_solution`].
pub const MAX_REFERENCE_DOUBLINGS: usize = 10;

/// Smallest tolerance accepted by [`reference_solution`].
pub const MIN_REFERENCE_TOL: f64 = 1e-13;

/// Newton tolerance of the reference runs, tight enough not to accumulate over many steps.
pub const REFERENCE_NEWTON_TOL: f64 = 1e-15;
/// Successive references also count as converged below `ROUNDOFF_FACTOR * eps * steps`.
pub const ROUNDOFF_FACTOR: f64 = 10.0;
pub const DEFAULT_REFERENCE_TOL: f64 = 1e-12;

/// Where a method's coefficients come from.
#[derive(Debug, Clone)]
pub enum MethodSource {
    /// `builtin:sK`
    Builtin(usize),
    File(PathBuf),
    Coefficients(Box<PeerCoefficients>),
}

impl MethodSource {
    pub fn load(&self) -> Result<PeerCoefficients> {
        match self {
            MethodSource::Builtin(s) => builtin(*s),
            MethodSource::File(path) => load_coefficients(path),
            MethodSource::Coefficients(c) => Ok((**c).clone()),
        }
    }
}

impl fmt::Display for MethodSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodSource::Builtin(s) => write!(f, "builtin:s{s}"),
            MethodSource::File(path) => write!(f, "{}", path.display()),
            MethodSource::Coefficients(c) => f.write_str(&c.label()),
        }
    }
}

impl FromStr for MethodSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("builtin:") {
            Some(rest) => {
                let stages = rest
                    .strip_prefix('s')
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|k| (1..=MAX_BUILTIN_STAGES).contains(k))
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "unknown builtin '{s}' (expected builtin:s1 .. builtin:s{MAX_BUILTIN_STAGES})"
                        ))
                    })?;
                Ok(MethodSource::Builtin(stages))
            }
            None if s.is_empty() => Err(Error::InvalidArgument("empty method source".into())),
            None => Ok(MethodSource::File(PathBuf::from(s))),
        }
    }
}

/// Everything needed to run one experiment, fixed before anything is integrated.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub method: MethodSource,
    pub problem: ProblemKind,
    pub params: ProblemParams,
    /// A single entry for a plain run, a decreasing sweep for a convergence study.
    pub step_sizes: Vec<f64>,
    pub t_end: f64,
    pub config: SolverConfig,
    pub reference_tol: f64,
    pub output: Option<PathBuf>,
}

impl RunSpec {
    pub fn new(method: MethodSource, problem: ProblemKind, step_sizes: Vec<f64>, t_end: f64) -> Self {
        RunSpec {
            method,
            problem,
            params: ProblemParams::default(),
            step_sizes,
            t_end,
            config: SolverConfig::default(),
            reference_tol: DEFAULT_REFERENCE_TOL,
            output: None,
        }
    }

    pub fn with_params(mut self, params: ProblemParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_output(mut self, path: impl AsRef<Path>) -> Self {
        self.output = Some(path.as_ref().to_path_buf());
        self
    }

    /// Checks the step sizes against `t_end` and the solver settings.
    pub fn check(&self) -> Result<()> {
        self.config.check()?;
        if self.step_sizes.is_empty() {
            return Err(Error::InvalidArgument("no step sizes given".into()));
        }
        if self.step_sizes.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidArgument("step sizes must be strictly decreasing".into()));
        }
        for &dt in &self.step_sizes {
            step_count(self.t_end, dt)?;
        }
        if !(self.reference_tol >= MIN_REFERENCE_TOL) {
            return Err(Error::InvalidArgument(format!(
                "reference tolerance must be at least {MIN_REFERENCE_TOL:e}"
            )));
        }
        Ok(())
    }
}

/// `dt_max 2^-i` for `i = 0 .. levels - 1`.
pub fn sweep_step_sizes(dt_max: f64, levels: usize) -> Vec<f64> {
    (0..levels).map(|i| dt_max / f64::from(1u32 << i)).collect()
}

/// Least-squares slope of `log(error)` against `log(dt)`.
pub fn fit_order(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", points.len())));
    }
    if let Some(p) = points.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0 && p.1.is_finite())) {
        return Err(Error::Fit(format!("non-positive entry (dt = {}, error = {})", p.0, p.1)));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(h, e)| (h.ln(), e.ln())).collect();
    Ok(least_squares_slope(&logs))
}

/// Every `stride`-th state of a fine trajectory, relabelled onto the coarse grid.
fn subsample(fine: &Trajectory, stride: usize, dt_grid: f64) -> Trajectory {
    let mut out = Trajectory::default();
    for (k, idx) in (stride - 1..fine.len()).step_by(stride).enumerate() {
        out.push((k + 1) as f64 * dt_grid, fine.states[idx].clone());
    }
    out
}

/// Reference values on the grid `dt_grid, 2 dt_grid, ..., t_end`.
///
/// Integrates with the highest-order builtin at `dt_grid / 2^k`, with tight Newton
/// tolerances, increasing `k` until two successive runs agree on the grid to `tol` or to the
/// roundoff level of the finer run, and returns the finer of the two.
pub fn reference_solution(
    problem: &SplitProblem,
    u0: &DVector<f64>,
    t_end: f64,
    dt_grid: f64,
    tol: f64,
    config: &SolverConfig,
) -> Result<Trajectory> {
    if !(tol >= MIN_REFERENCE_TOL) {
        return Err(Error::InvalidArgument(format!(
            "reference tolerance must be at least {MIN_REFERENCE_TOL:e}, got {tol:e}"
        )));
    }
    step_count(t_end, dt_grid)?;
    let method = builtin(MAX_BUILTIN_STAGES)?;
    let config = SolverConfig {
        newton_abs_tol: config.newton_abs_tol.min(REFERENCE_NEWTON_TOL),
        newton_rel_tol: config.newton_rel_tol.min(REFERENCE_NEWTON_TOL),
        ..config.clone()
    };
    let run = |k: usize| -> Result<Trajectory> {
        let stride = 1usize << k;
        let fine = integrate(&method, problem, u0, t_end, dt_grid / stride as f64, &config)?;
        Ok(subsample(&fine, stride, dt_grid))
    };
    let mut previous = run(1)?;
    let mut difference = f64::INFINITY;
    for k in 2..=MAX_REFERENCE_DOUBLINGS {
        let current = run(k)?;
        difference = scaled_max_error(&previous, &current)?;
        let steps = (t_end / dt_grid).round() * (1u64 << k) as f64;
        if difference <= tol.max(ROUNDOFF_FACTOR * f64::EPSILON * steps) {
            return Ok(current);
        }
        previous = current;
    }
    Err(Error::Reference {
        doublings: MAX_REFERENCE_DOUBLINGS,
        difference,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceEntry {
    pub dt: f64,
    /// Scaled maximum error, or the failure message of the run.
    pub error: std::result::Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub method: String,
    pub problem: String,
    pub epsilon: Option<f64>,
    pub entries: Vec<ConvergenceEntry>,
    pub fitted_order: f64,
    pub reference: String,
}

impl ConvergenceReport {
    /// `(dt, error)` pairs of the successful runs.
    pub fn successes(&self) -> Vec<(f64, f64)> {
        self.entries
            .iter()
            .filter_map(|e| e.error.as_ref().ok().map(|&err| (e.dt, err)))
            .collect()
    }
}

/// Runs every step size of the sweep against one shared reference and fits the order.
pub fn convergence_study(spec: &RunSpec) -> Result<ConvergenceReport> {
    spec.check()?;
    if spec.step_sizes.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "a convergence study needs at least 3 step sizes, got {}",
            spec.step_sizes.len()
        )));
    }
    let method = spec.method.load()?;
    let entry = build_problem(spec.problem, &spec.params)?;
    let u0 = entry.initial();
    let dt_min = *spec.step_sizes.last().expect("checked non-empty");
    let reference = reference_solution(&entry.problem, &u0, spec.t_end, dt_min, spec.reference_tol, &spec.config)?;

    let entries = spec
        .step_sizes
        .iter()
        .map(|&dt| {
            let stride = (dt / dt_min).round() as usize;
            let error = integrate(&method, &entry.problem, &u0, spec.t_end, dt, &spec.config)
                .and_then(|traj| scaled_max_error(&traj, &subsample(&reference, stride, dt)))
                .map_err(|e| e.to_string());
            ConvergenceEntry { dt, error }
        })
        .collect::<Vec<_>>();

    let points: Vec<(f64, f64)> = entries
        .iter()
        .filter_map(|e| e.error.as_ref().ok().map(|&err| (e.dt, err)))
        .collect();
    let fitted_order = fit_order(&points)?;
    Ok(ConvergenceReport {
        method: spec.method.to_string(),
        problem: entry.problem.label.clone(),
        epsilon: entry.relaxation.as_ref().map(|rp| rp.epsilon),
        entries,
        fitted_order,
        reference: format!(
            "builtin:s{MAX_BUILTIN_STAGES} self-refined from dt = {dt_min} to tolerance {:e}",
            spec.reference_tol
        ),
    })
}
