use std::fmt;

use nalgebra::{Complex, DMatrix, DVector};

use super::{vandermonde, PeerCoefficients};
use crate::error::{Error, Result};

/// Tolerance for the numerical invariants of a coefficient set.
pub const VALIDATION_TOL: f64 = 1e-12;
/// A per-stage exactness residual above this ends the degree probe.
pub const EXACTNESS_PROBE_CUTOFF: f64 = 1e-8;
/// Fraction of `u'` assigned to the explicit part in [`ExactnessMode::ImexSplit`].
pub const IMEX_SPLIT_ALPHA: f64 = 0.3;

/// Degrees probed beyond the stage count when searching for the exactness limit.
const PROBE_MARGIN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactnessMode {
    /// `w_{n+1} = P w_n + dt Q u'(old) + dt R u'(new)`.
    ImplicitBase,
    /// The full IMEX recurrence with `u' = alpha u' + (1 - alpha) u'` split between the parts.
    ImexSplit,
}

/// Per-stage defect when `u(t) = t^degree` is inserted into the scheme, in units where
/// `t_n = 0` and `dt = 1`, so that old stages sit at `c_j` and new stages at `1 + c_j`.
pub fn residual_polynomial_exactness(
    coeffs: &PeerCoefficients,
    degree: usize,
    mode: ExactnessMode,
) -> DVector<f64> {
    let s = coeffs.stages();
    let c = coeffs.nodes();
    let k = degree as i32;
    let value = |t: f64| t.powi(k);
    let slope = |t: f64| if k == 0 { 0.0 } else { f64::from(k) * t.powi(k - 1) };

    let old = DVector::from_fn(s, |j, _| value(c[j]));
    let new = DVector::from_fn(s, |j, _| value(1.0 + c[j]));
    let d_old = DVector::from_fn(s, |j, _| slope(c[j]));
    let d_new = DVector::from_fn(s, |j, _| slope(1.0 + c[j]));

    let predicted = match mode {
        ExactnessMode::ImplicitBase => {
            coeffs.p() * &old + coeffs.q() * &d_old + coeffs.r() * &d_new
        }
        ExactnessMode::ImexSplit => {
            let a = IMEX_SPLIT_ALPHA;
            coeffs.p() * &old
                + coeffs.qhat() * (&d_old * a)
                + coeffs.rhat() * (&d_new * a)
                + coeffs.q() * (&d_old * (1.0 - a))
                + coeffs.r() * (&d_new * (1.0 - a))
        }
    };
    new - predicted
}

/// Max over stages of `S1 p(c - e) + S2 p(c) - p(c)` for `p(t) = t^degree`.
fn extrapolation_defect(coeffs: &PeerCoefficients, degree: usize) -> f64 {
    let s = coeffs.stages();
    let c = coeffs.nodes();
    let k = degree as i32;
    let at_new = DVector::from_fn(s, |j, _| c[j].powi(k));
    let at_old = DVector::from_fn(s, |j, _| (c[j] - 1.0).powi(k));
    (coeffs.s1() * at_old + coeffs.s2() * &at_new - at_new).amax()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub invariant: String,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
    /// Highest degree `k` with every degree `0..=k` reproduced by the implicit base scheme.
    pub implicit_exactness: Option<usize>,
    /// Same for the full IMEX recurrence under a fixed polynomial split.
    pub imex_exactness: Option<usize>,
    /// Highest degree reproduced by the `S1`, `S2` extrapolation.
    pub extrapolation_exactness: Option<usize>,
}

impl ValidationReport {
    pub fn violation(&self, invariant: &str) -> Option<f64> {
        self.violations
            .iter()
            .find(|v| v.invariant == invariant)
            .map(|v| v.magnitude)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "passed: {}", self.passed)?;
        for v in &self.violations {
            writeln!(f, "  violation: {} (max defect {:e})", v.invariant, v.magnitude)?;
        }
        let show = |d: Option<usize>| d.map_or_else(|| "none".to_string(), |d| d.to_string());
        writeln!(f, "  implicit exactness degree: {}", show(self.implicit_exactness))?;
        writeln!(f, "  imex exactness degree: {}", show(self.imex_exactness))?;
        write!(
            f,
            "  extrapolation exactness degree: {}",
            show(self.extrapolation_exactness)
        )
    }
}

fn highest_degree(limit: usize, defect: impl Fn(usize) -> f64) -> Option<usize> {
    let mut best = None;
    for degree in 0..=limit {
        if defect(degree) > EXACTNESS_PROBE_CUTOFF {
            break;
        }
        best = Some(degree);
    }
    best
}

/// Checks every structural and algebraic invariant of a coefficient set.
///
/// Triangularity is checked exactly; the remaining identities to [`VALIDATION_TOL`].
pub fn validate(coeffs: &PeerCoefficients) -> ValidationReport {
    let s = coeffs.stages();
    let c = coeffs.nodes();
    let gamma = coeffs.gamma();
    let mut violations = Vec::new();
    let mut exact = |name: &str, magnitude: f64| {
        if magnitude != 0.0 {
            violations.push(Violation {
                invariant: name.to_string(),
                magnitude,
            });
        }
    };

    let min_gap = (0..s)
        .flat_map(|i| (i + 1..s).map(move |j| (i, j)))
        .map(|(i, j)| (c[i] - c[j]).abs())
        .fold(f64::INFINITY, f64::min);
    if min_gap == 0.0 {
        exact("nodes distinct", 1.0);
    }
    exact("c_s = 1", (c[s - 1] - 1.0).abs());
    if !(gamma > 0.0) {
        exact("gamma > 0", gamma.abs().max(f64::MIN_POSITIVE));
    }
    let r = coeffs.r();
    let upper_r = (0..s)
        .flat_map(|i| (i + 1..s).map(move |j| (i, j)))
        .map(|ij| r[ij].abs())
        .fold(0.0, f64::max);
    exact("R lower triangular", upper_r);
    let diag_r = (0..s).map(|i| (r[(i, i)] - gamma).abs()).fold(0.0, f64::max);
    exact("R diagonal = gamma", diag_r);
    let s2 = coeffs.s2();
    let upper_s2 = (0..s)
        .flat_map(|i| (i..s).map(move |j| (i, j)))
        .map(|ij| s2[ij].abs())
        .fold(0.0, f64::max);
    exact("S2 strictly lower", upper_s2);

    let mut approx = |name: &str, magnitude: f64| {
        if !(magnitude <= VALIDATION_TOL) {
            violations.push(Violation {
                invariant: name.to_string(),
                magnitude,
            });
        }
    };
    let e = DVector::from_element(s, 1.0);
    approx("Pe=e", (coeffs.p() * &e - &e).amax());

    let eye = DMatrix::<f64>::identity(s, s);
    let v0 = vandermonde(c, 0.0);
    let v1 = vandermonde(c, 1.0);
    // S1 V1 = (I - S2) V0 avoids forming the inverse.
    approx(
        "S1 = (I - S2) V0 V1^-1",
        (coeffs.s1() * &v1 - (&eye - s2) * &v0).amax(),
    );
    approx(
        "Qhat = Q + R S1",
        (coeffs.qhat() - (coeffs.q() + r * coeffs.s1())).amax(),
    );
    approx("Rhat = R S2", (coeffs.rhat() - r * s2).amax());
    approx(
        "(S1 + S2)e = e",
        ((coeffs.s1() + s2) * &e - &e).amax(),
    );

    let limit = s + PROBE_MARGIN;
    let implicit_exactness = highest_degree(limit, |k| {
        residual_polynomial_exactness(coeffs, k, ExactnessMode::ImplicitBase).amax()
    });
    let imex_exactness = highest_degree(limit, |k| {
        residual_polynomial_exactness(coeffs, k, ExactnessMode::ImexSplit).amax()
    });
    let extrapolation_exactness = highest_degree(limit, |k| extrapolation_defect(coeffs, k));

    ValidationReport {
        passed: violations.is_empty(),
        violations,
        implicit_exactness,
        imex_exactness,
        extrapolation_exactness,
    }
}

/// Spectral radius of `P` at most one, with unit-modulus eigenvalues semisimple.
pub fn check_zero_stability(p: &DMatrix<f64>) -> Result<()> {
    const RADIUS_TOL: f64 = 1e-10;
    const CLUSTER_TOL: f64 = 1e-6;
    const RANK_TOL: f64 = 1e-8;

    let s = p.nrows();
    let eigenvalues: Vec<Complex<f64>> = p.clone().complex_eigenvalues().iter().copied().collect();
    if let Some(lambda) = eigenvalues.iter().find(|l| l.norm() > 1.0 + RADIUS_TOL) {
        return Err(Error::Constraint(format!(
            "P is not zero-stable: eigenvalue {lambda} outside the unit disc"
        )));
    }
    let pc: DMatrix<Complex<f64>> = p.map(|v| Complex::new(v, 0.0));
    for lambda in eigenvalues.iter().filter(|l| l.norm() > 1.0 - RADIUS_TOL) {
        let multiplicity = eigenvalues
            .iter()
            .filter(|m| (*m - lambda).norm() < CLUSTER_TOL)
            .count();
        if multiplicity == 1 {
            continue;
        }
        let shifted = &pc - DMatrix::<Complex<f64>>::identity(s, s) * *lambda;
        let nullity = shifted
            .svd(false, false)
            .singular_values
            .iter()
            .filter(|&&sv| sv < RANK_TOL)
            .count();
        if nullity < multiplicity {
            return Err(Error::Constraint(format!(
                "P is not zero-stable: unit eigenvalue {lambda} is defective"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{construct_order_s, ConstructionInputs, NodeVector};

    fn backward_euler() -> PeerCoefficients {
        construct_order_s(
            &ConstructionInputs::new(NodeVector::new(vec![1.0]).unwrap()).with_gamma(1.0),
        )
        .unwrap()
    }

    fn two_stage() -> PeerCoefficients {
        construct_order_s(&ConstructionInputs::new(
            NodeVector::new(vec![0.4, 1.0]).unwrap(),
        ))
        .unwrap()
    }

    #[test]
    fn backward_euler_quadratic_defect() {
        // 4 - (1 + 2 * 2)
        let r = residual_polynomial_exactness(&backward_euler(), 2, ExactnessMode::ImplicitBase);
        assert!((r[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn constants_are_always_exact() {
        for mode in [ExactnessMode::ImplicitBase, ExactnessMode::ImexSplit] {
            assert_eq!(residual_polynomial_exactness(&two_stage(), 0, mode).amax(), 0.0);
        }
    }

    #[test]
    fn constructed_method_passes() {
        let report = validate(&two_stage());
        assert!(report.passed, "{report}");
        assert!(report.implicit_exactness.unwrap() >= 2);
        assert!(report.extrapolation_exactness.unwrap() >= 1);
    }

    #[test]
    fn injected_row_sum_defect() {
        let good = two_stage();
        let coeffs = PeerCoefficients::from_parts(
            good.nodes().clone(),
            good.gamma(),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.9, 0.0, 0.9]),
            good.q().clone(),
            good.r().clone(),
            good.s2().clone(),
        )
        .unwrap();
        let report = validate(&coeffs);
        assert!(!report.passed);
        assert!((report.violation("Pe=e").unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn injected_s2_diagonal() {
        let good = two_stage();
        let coeffs = PeerCoefficients::from_parts(
            good.nodes().clone(),
            good.gamma(),
            good.p().clone(),
            good.q().clone(),
            good.r().clone(),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]),
        )
        .unwrap();
        let report = validate(&coeffs);
        assert_eq!(report.violation("S2 strictly lower"), Some(0.5));
    }

    #[test]
    fn last_node_off_one_is_reported() {
        let good = two_stage();
        let coeffs = PeerCoefficients::from_parts(
            NodeVector::from_raw(vec![0.4, 0.9]),
            good.gamma(),
            good.p().clone(),
            good.q().clone(),
            good.r().clone(),
            good.s2().clone(),
        )
        .unwrap();
        let report = validate(&coeffs);
        assert!(report.violation("c_s = 1").unwrap() > 0.09);
    }

    #[test]
    fn zero_stability() {
        assert!(check_zero_stability(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0])).is_ok());
        // Jordan block at 1.
        let jordan = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(check_zero_stability(&jordan).is_err());
        // Identity: double eigenvalue 1 but semisimple.
        assert!(check_zero_stability(&DMatrix::identity(3, 3)).is_ok());
    }
}
