//! Bundled test problems.

use std::f64::consts::{FRAC_PI_2, PI};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::relaxation::{limit_problem, RelaxationProblem, RelaxationStructure};
use crate::stepper::SplitProblem;

fn vec2(a: f64, b: f64) -> DVector<f64> {
    DVector::from_vec(vec![a, b])
}

/// Linear damped oscillator with steady state `[1, 0]`:
/// `F0(u) = [u2, -u1]`, `F1(u) = [0, 1 - u2]`, started from `[0, 1]`.
pub fn wb_boscarino_pareschi() -> SplitProblem {
    SplitProblem::new(
        "wb",
        2,
        |u| vec2(u[1], -u[0]),
        |u| vec2(0.0, 1.0 - u[1]),
    )
    .with_jacobian(|_| DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -1.0]))
    .with_initial(vec2(0.0, 1.0))
    .with_equilibrium(vec2(1.0, 0.0))
    .expect("[1, 0] is a steady state")
}

/// Stiff relaxation oscillator `F0(u) = [-u2, u1]`, `F1(u) = [0, sin u1 - u2] / eps`,
/// started on the equilibrium manifold at `[pi/2, 1]`.
pub fn ap_pareschi_russo(epsilon: f64) -> Result<RelaxationProblem> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let inv = 1.0 / epsilon;
    let full = SplitProblem::new(
        "ap",
        2,
        |u| vec2(-u[1], u[0]),
        move |u| vec2(0.0, (u[0].sin() - u[1]) * inv),
    )
    .with_jacobian(move |u| DMatrix::from_row_slice(2, 2, &[0.0, 0.0, u[0].cos() * inv, -inv]))
    .with_initial(vec2(FRAC_PI_2, 1.0));
    let structure = RelaxationStructure::new(
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        |u| vec2(0.0, u[0].sin() - u[1]),
        |u| vec2(u[0], u[0].sin()),
    )?;
    checked(RelaxationProblem::new(full, structure, epsilon)?)
}

/// State `(tau, y)` with `tau' = 1` and `y' = q(tau)`, `q` the derivative of `t^degree`,
/// split as `alpha q` explicit and `(1 - alpha) q` implicit. Exact solution `(t, t^degree)`.
pub fn polynomial_exactness_problem(degree: usize, alpha: f64) -> Result<SplitProblem> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let k = degree as i32;
    let q = move |tau: f64| if k == 0 { 0.0 } else { f64::from(k) * tau.powi(k - 1) };
    let dq = move |tau: f64| {
        if k <= 1 {
            0.0
        } else {
            f64::from(k * (k - 1)) * tau.powi(k - 2)
        }
    };
    Ok(SplitProblem::new(
        format!("poly{degree}"),
        2,
        move |u| vec2(1.0, alpha * q(u[0])),
        move |u| vec2(0.0, (1.0 - alpha) * q(u[0])),
    )
    .with_jacobian(move |u| DMatrix::from_row_slice(2, 2, &[0.0, 0.0, (1.0 - alpha) * dq(u[0]), 0.0]))
    .with_exact(move |t| vec2(t, t.powi(k)))
    .with_initial(vec2(0.0, 0.0f64.powi(k))))
}

/// Parameters of the semi-discrete linear relaxation system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JinXinParams {
    pub epsilon: f64,
    pub cells: usize,
    /// Equilibrium slope, `v = b u`; the limit advection speed.
    pub advection: f64,
    /// Relaxation wave speed squared.
    pub wave_speed: f64,
}

impl Default for JinXinParams {
    fn default() -> Self {
        JinXinParams {
            epsilon: 1e-8,
            cells: 16,
            advection: 0.5,
            wave_speed: 1.0,
        }
    }
}

impl JinXinParams {
    pub fn dx(&self) -> f64 {
        1.0 / self.cells as f64
    }

    /// Largest stable forward-Euler step of the upwind discretization, `dx / sqrt(a)`.
    pub fn cfl_step(&self) -> f64 {
        self.dx() / self.wave_speed.sqrt()
    }
}

/// First-order upwind fluxes of `u_t + v_x = 0`, `v_t + a u_x = 0` on a periodic grid,
/// written in characteristic variables `v +- sqrt(a) u`. Returns `-(flux differences)/dx`.
fn jin_xin_transport(state: &DVector<f64>, cells: usize, a: f64, dx: f64) -> DVector<f64> {
    let lambda = a.sqrt();
    let (u, v) = (state.rows(0, cells), state.rows(cells, cells));
    // Interface i + 1/2 between cells i and i + 1.
    let flux = |i: usize| {
        let j = (i + 1) % cells;
        let fu = 0.5 * (v[i] + v[j]) - 0.5 * lambda * (u[j] - u[i]);
        let fv = 0.5 * a * (u[i] + u[j]) - 0.5 * lambda * (v[j] - v[i]);
        (fu, fv)
    };
    let fluxes: Vec<(f64, f64)> = (0..cells).map(flux).collect();
    let mut out = DVector::zeros(2 * cells);
    for i in 0..cells {
        let left = fluxes[(i + cells - 1) % cells];
        let right = fluxes[i];
        out[i] = -(right.0 - left.0) / dx;
        out[cells + i] = -(right.1 - left.1) / dx;
    }
    out
}

/// Jin–Xin relaxation of linear advection, semi-discretized on `cells` periodic cells of
/// `[0, 1]`. State `(u_1..u_n, v_1..v_n)`; the source is `(0, b u - v)`; smooth
/// well-prepared initial data `u = sin(2 pi x)`, `v = b u`.
pub fn jin_xin_demo(params: JinXinParams) -> Result<RelaxationProblem> {
    let JinXinParams {
        epsilon,
        cells,
        advection: b,
        wave_speed: a,
    } = params;
    if cells < 8 {
        return Err(Error::InvalidArgument(format!("need at least 8 cells, got {cells}")));
    }
    if !(a > b * b) {
        return Err(Error::InvalidArgument(format!(
            "subcharacteristic condition a > b^2 violated: a = {a}, b = {b}"
        )));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let n = cells;
    let dx = params.dx();
    let inv = 1.0 / epsilon;
    let source = move |s: &DVector<f64>| {
        let mut g = DVector::zeros(2 * n);
        for i in 0..n {
            g[n + i] = b * s[i] - s[n + i];
        }
        g
    };
    let mut jac = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        jac[(n + i, i)] = b * inv;
        jac[(n + i, n + i)] = -inv;
    }
    let initial = DVector::from_fn(2 * n, |k, _| {
        let x = ((k % n) as f64 + 0.5) * dx;
        let u = (2.0 * PI * x).sin();
        if k < n {
            u
        } else {
            b * u
        }
    });
    let full = SplitProblem::new(
        "jinxin",
        2 * n,
        move |s| jin_xin_transport(s, n, a, dx),
        move |s| source(s) * inv,
    )
    .with_jacobian(move |_| jac.clone())
    .with_initial(initial);

    let c = DMatrix::from_fn(n, 2 * n, |i, j| if i == j { 1.0 } else { 0.0 });
    let structure = RelaxationStructure::new(c, source, move |u: &DVector<f64>| {
        let mut e = DVector::zeros(2 * n);
        e.rows_mut(0, n).copy_from(u);
        e.rows_mut(n, n).copy_from(&(u * b));
        e
    })?;
    checked(RelaxationProblem::new(full, structure, epsilon)?)
}

/// Catalog entries must pass their own structure check.
const CATALOG_STRUCTURE_TOL: f64 = 1e-12;

fn checked(rp: RelaxationProblem) -> Result<RelaxationProblem> {
    let report = rp.check()?;
    if !(report.max_defect() <= CATALOG_STRUCTURE_TOL) {
        return Err(Error::InvalidArgument(format!(
            "'{}' fails its structure check: {report:?}",
            rp.full.label
        )));
    }
    Ok(rp)
}

/// Problem names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Wb,
    Ap,
    Poly,
    JinXin,
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wb" => Ok(ProblemKind::Wb),
            "ap" => Ok(ProblemKind::Ap),
            "poly" => Ok(ProblemKind::Poly),
            "jinxin" => Ok(ProblemKind::JinXin),
            other => Err(Error::InvalidArgument(format!(
                "unknown problem '{other}' (expected wb, ap, poly or jinxin)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemParams {
    pub epsilon: f64,
    pub degree: usize,
    pub alpha: f64,
    pub cells: usize,
    pub advection: f64,
    pub wave_speed: f64,
}

impl Default for ProblemParams {
    fn default() -> Self {
        let jx = JinXinParams::default();
        ProblemParams {
            epsilon: 1.0,
            degree: 2,
            alpha: 0.5,
            cells: jx.cells,
            advection: jx.advection,
            wave_speed: jx.wave_speed,
        }
    }
}

/// A catalog problem and, for relaxation systems, its structure.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub problem: SplitProblem,
    pub relaxation: Option<RelaxationProblem>,
}

impl CatalogEntry {
    pub fn initial(&self) -> DVector<f64> {
        self.problem
            .initial
            .clone()
            .expect("catalog problems carry an initial value")
    }

    pub fn limit(&self) -> Option<SplitProblem> {
        self.relaxation.as_ref().map(limit_problem)
    }
}

pub fn build_problem(kind: ProblemKind, params: &ProblemParams) -> Result<CatalogEntry> {
    let relaxation = |rp: RelaxationProblem| CatalogEntry {
        problem: rp.full.clone(),
        relaxation: Some(rp),
    };
    Ok(match kind {
        ProblemKind::Wb => CatalogEntry {
            problem: wb_boscarino_pareschi(),
            relaxation: None,
        },
        ProblemKind::Ap => relaxation(ap_pareschi_russo(params.epsilon)?),
        ProblemKind::Poly => CatalogEntry {
            problem: polynomial_exactness_problem(params.degree, params.alpha)?,
            relaxation: None,
        },
        ProblemKind::JinXin => relaxation(jin_xin_demo(JinXinParams {
            epsilon: params.epsilon,
            cells: params.cells,
            advection: params.advection,
            wave_speed: params.wave_speed,
        })?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn wb_equilibrium_and_values() {
        let p = wb_boscarino_pareschi();
        let u_star = vec2(1.0, 0.0);
        assert_eq!((p.f0)(&u_star), vec2(0.0, -1.0));
        assert_eq!((p.f1)(&u_star), vec2(0.0, 1.0));
        assert_eq!(p.total_rhs(&u_star), vec2(0.0, 0.0));
        assert_eq!((p.f0)(&vec2(0.0, 1.0)), vec2(1.0, 0.0));
    }

    #[test]
    fn wb_linearization_decays_at_rate_one_half() {
        // u' = A (u - u*) with A = [[0, 1], [-1, -1]]: lambda^2 + lambda + 1 = 0.
        let p = wb_boscarino_pareschi();
        let a = p.jacobian_f1(&vec2(0.0, 0.0), 1e-8)
            + DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let eig = a.complex_eigenvalues();
        for l in eig.iter() {
            assert_abs_diff_eq!(l.re, -0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(l.im.abs(), 3f64.sqrt() / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ap_initial_data_is_well_prepared() {
        let rp = ap_pareschi_russo(1e-3).unwrap();
        let u0 = rp.full.initial.clone().unwrap();
        assert_eq!((rp.structure.source)(&u0).amax(), 0.0);
        let e = (rp.structure.equilibrium_map)(&DVector::from_element(1, 0.5));
        assert_eq!((rp.structure.source)(&e), vec2(0.0, 0.0));
        assert!(ap_pareschi_russo(0.0).is_err());
        assert!(ap_pareschi_russo(-1.0).is_err());
    }

    #[test]
    fn ap_limit_is_minus_sine() {
        let rp = ap_pareschi_russo(1e-6).unwrap();
        let limit = limit_problem(&rp);
        for v in [-2.0, -0.3, 0.0, 1.0, FRAC_PI_2] {
            let u = DVector::from_element(1, v);
            assert_abs_diff_eq!((limit.f0)(&u)[0], -f64::sin(v), epsilon = 1e-16);
            assert_eq!((limit.f1)(&u)[0], 0.0);
        }
    }

    #[test]
    fn ap_scaling_is_consistent() {
        // f1 at eps = 1 equals G itself.
        let rp = ap_pareschi_russo(1.0).unwrap();
        let u = vec2(0.3, -0.7);
        assert_eq!((rp.full.f1)(&u), (rp.structure.source)(&u));
    }

    #[test]
    fn polynomial_problem_exact_solution() {
        let p = polynomial_exactness_problem(3, 0.3).unwrap();
        let exact = p.exact.clone().unwrap();
        let u = exact(0.7);
        assert_abs_diff_eq!(u[1], 0.343, epsilon = 1e-15);
        let rhs = p.total_rhs(&u);
        assert_abs_diff_eq!(rhs[1], 3.0 * 0.49, epsilon = 1e-15);
        assert!(polynomial_exactness_problem(2, 1.5).is_err());
    }

    #[test]
    fn jin_xin_structure_and_limit() {
        let rp = jin_xin_demo(JinXinParams::default()).unwrap();
        assert!(rp.check().unwrap().max_defect() <= 1e-12);
        assert_eq!(rp.structure.m_cons, 16);
        assert_eq!(rp.full.dim, 32);
        // Zero advection: the derived flux vanishes and cell values stay put.
        let still = jin_xin_demo(JinXinParams {
            advection: 0.0,
            ..JinXinParams::default()
        })
        .unwrap();
        let limit = limit_problem(&still);
        let u0 = still.structure.project(still.full.initial.as_ref().unwrap());
        let rate = (limit.f0)(&u0);
        let mean_rate = rate.sum() / rate.len() as f64;
        assert_abs_diff_eq!(mean_rate, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn jin_xin_preconditions() {
        let base = JinXinParams::default();
        assert!(jin_xin_demo(JinXinParams { cells: 4, ..base }).is_err());
        assert!(jin_xin_demo(JinXinParams { wave_speed: 0.2, ..base }).is_err());
        assert!(jin_xin_demo(JinXinParams { epsilon: 0.0, ..base }).is_err());
    }

    #[test]
    fn jin_xin_transport_conserves_mass() {
        let rp = jin_xin_demo(JinXinParams::default()).unwrap();
        let u = DVector::from_fn(32, |k, _| ((k * 7) % 5) as f64 - 2.0);
        let rate = (rp.full.f0)(&u);
        assert_abs_diff_eq!(rate.rows(0, 16).sum(), 0.0, epsilon = 1e-12);
    }
}
