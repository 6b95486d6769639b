use nalgebra::DMatrix;

use super::{check_zero_stability, NodeVector, PeerCoefficients};
use crate::error::{Error, Result};

/// Residual bound for the small Vandermonde solves.
const SOLVE_RESIDUAL_LIMIT: f64 = 1e-10;

/// Matrix with entries `(c_i - shift)^(j-1)`; `shift = 0` gives `V0`, `shift = 1` gives `V1`.
pub fn vandermonde(c: &NodeVector, shift: f64) -> DMatrix<f64> {
    let s = c.len();
    DMatrix::from_fn(s, s, |i, j| (c[i] - shift).powi(j as i32))
}

/// Solves `X A = B` for `X` through the transposed system; reports poor conditioning.
fn solve_right(b: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let at = a.transpose();
    let xt = at
        .clone()
        .lu()
        .solve(&b.transpose())
        .ok_or_else(|| Error::InvalidNodes("Vandermonde matrix is singular".into()))?;
    let x = xt.transpose();
    let residual = (&x * a - b).amax();
    let scale = 1.0 + b.amax();
    if !(residual <= SOLVE_RESIDUAL_LIMIT * scale) {
        return Err(Error::Conditioning {
            residual,
            limit: SOLVE_RESIDUAL_LIMIT * scale,
        });
    }
    Ok(x)
}

/// `V0 V1^{-1}`, the operator that extrapolates degree `s-1` polynomials from the
/// previous stage times `c - 1` to the new stage times `c`.
pub fn extrapolation_operator(c: &NodeVector) -> Result<DMatrix<f64>> {
    solve_right(&vandermonde(c, 0.0), &vandermonde(c, 1.0))
}

/// `S1 = (I - S2) V0 V1^{-1}`.
pub fn derive_s1(s2: &DMatrix<f64>, c: &NodeVector) -> Result<DMatrix<f64>> {
    let s = c.len();
    if s2.shape() != (s, s) {
        return Err(Error::Dimension(format!(
            "S2 is {}x{}, expected {s}x{s}",
            s2.nrows(),
            s2.ncols()
        )));
    }
    if let Some((i, j)) = strictly_lower_defect(s2) {
        return Err(Error::Constraint(format!(
            "S2 must be strictly lower triangular, entry ({}, {}) = {}",
            i + 1,
            j + 1,
            s2[(i, j)]
        )));
    }
    Ok((DMatrix::identity(s, s) - s2) * extrapolation_operator(c)?)
}

fn strictly_lower_defect(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    (0..m.nrows())
        .flat_map(|i| (i..m.ncols()).map(move |j| (i, j)))
        .find(|&(i, j)| m[(i, j)] != 0.0)
}

/// Diagonal of `R` used when none is given: the classical SDIRK choices.
pub fn default_gamma(stages: usize) -> f64 {
    if stages <= 2 {
        1.0 - std::f64::consts::FRAC_1_SQRT_2
    } else {
        0.435866521508459
    }
}

/// `P = e e_s^T`: every new stage starts from the last stage of the previous step.
pub fn default_transfer(stages: usize) -> DMatrix<f64> {
    DMatrix::from_fn(stages, stages, |_, j| if j + 1 == stages { 1.0 } else { 0.0 })
}

/// Free parameters of a constructed method. `Q` and `S1` are then fixed by the
/// exactness conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstructionInputs {
    pub nodes: NodeVector,
    pub gamma: f64,
    pub p: DMatrix<f64>,
    pub s2: DMatrix<f64>,
    pub r_lower: Option<DMatrix<f64>>,
}

impl ConstructionInputs {
    /// Default `gamma`, `P = e e_s^T`, `S2 = 0` and diagonal `R`.
    pub fn new(nodes: NodeVector) -> Self {
        let s = nodes.len();
        ConstructionInputs {
            gamma: default_gamma(s),
            p: default_transfer(s),
            s2: DMatrix::zeros(s, s),
            r_lower: None,
            nodes,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_transfer(mut self, p: DMatrix<f64>) -> Self {
        self.p = p;
        self
    }

    pub fn with_s2(mut self, s2: DMatrix<f64>) -> Self {
        self.s2 = s2;
        self
    }

    pub fn with_r_lower(mut self, r_lower: DMatrix<f64>) -> Self {
        self.r_lower = Some(r_lower);
        self
    }
}

/// Builds a method of stage order `s`.
///
/// `R = gamma I + R_lower`; row `i` of `Q` solves the `s` conditions that make the implicit
/// base scheme `w_{n+1} = P w_n + dt Q F(w_n) + dt R F(w_{n+1})` exact for `u(t) = t^k`,
/// `k = 1..s`, in units where `t_n = 0` and `dt = 1`:
///
/// ```text
/// (1 + c_i)^k = sum_j P_ij c_j^k + k (sum_j Q_ij c_j^(k-1) + sum_j R_ij (1 + c_j)^(k-1))
/// ```
pub fn construct_order_s(inputs: &ConstructionInputs) -> Result<PeerCoefficients> {
    let c = &inputs.nodes;
    c.check()?;
    c.check_unit_interval()?;
    let s = c.len();
    let gamma = inputs.gamma;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let p = &inputs.p;
    if p.shape() != (s, s) {
        return Err(Error::Dimension(format!(
            "P is {}x{}, expected {s}x{s}",
            p.nrows(),
            p.ncols()
        )));
    }
    let row_sum_defect = p
        .row_iter()
        .map(|row| (row.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    if row_sum_defect > super::VALIDATION_TOL {
        return Err(Error::Constraint(format!(
            "Pe = e violated by {row_sum_defect:e}"
        )));
    }
    check_zero_stability(p)?;

    let mut r = DMatrix::from_diagonal_element(s, s, gamma);
    if let Some(lower) = &inputs.r_lower {
        if lower.shape() != (s, s) {
            return Err(Error::Dimension(format!(
                "R_lower is {}x{}, expected {s}x{s}",
                lower.nrows(),
                lower.ncols()
            )));
        }
        if let Some((i, j)) = strictly_lower_defect(lower) {
            return Err(Error::Constraint(format!(
                "R_lower must be strictly lower triangular, entry ({}, {}) = {}",
                i + 1,
                j + 1,
                lower[(i, j)]
            )));
        }
        r += lower;
    }
    let s1 = derive_s1(&inputs.s2, c)?;

    // Q V0 = B, where B(i, k-1) collects the k-th condition divided by k.
    let b = DMatrix::from_fn(s, s, |i, col| {
        let k = col as i32 + 1;
        let kf = f64::from(k);
        let mut rhs = (1.0 + c[i]).powi(k);
        for j in 0..s {
            rhs -= p[(i, j)] * c[j].powi(k);
            rhs -= kf * r[(i, j)] * (1.0 + c[j]).powi(k - 1);
        }
        rhs / kf
    });
    let q = solve_right(&b, &vandermonde(c, 0.0))?;

    let coeffs = PeerCoefficients::from_parts(c.clone(), gamma, p.clone(), q, r, inputs.s2.clone())?;
    debug_assert!((coeffs.s1() - &s1).amax() <= 1e-12 * (1.0 + s1.amax()));
    Ok(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn nodes(v: &[f64]) -> NodeVector {
        NodeVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn vandermonde_small_cases() {
        let c = nodes(&[0.0, 1.0]);
        assert_eq!(vandermonde(&c, 0.0), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]));
        assert_eq!(vandermonde(&c, 1.0), DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 0.0]));
        assert_eq!(vandermonde(&nodes(&[1.0]), 1.0), DMatrix::from_element(1, 1, 1.0));
    }

    /// Extrapolating the monomials 1 and t from the nodes c - 1 to c:
    /// a value pair (f(-1), f(0)) maps to (f(0), f(1)) = (f(0), 2 f(0) - f(-1)).
    #[test]
    fn derive_s1_two_stage_by_hand() {
        let s1 = derive_s1(&DMatrix::zeros(2, 2), &nodes(&[0.0, 1.0])).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 2.0]);
        assert_abs_diff_eq!(s1, expected, epsilon = 1e-15);
    }

    #[test]
    fn derive_s1_rows_sum_to_one() {
        for c in [vec![1.0], vec![0.3, 1.0], vec![0.0, 0.4, 1.0], vec![0.1, 0.5, 0.8, 1.0]] {
            let s = c.len();
            let s1 = derive_s1(&DMatrix::zeros(s, s), &nodes(&c)).unwrap();
            for row in s1.row_iter() {
                assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-13);
            }
        }
        let s1 = derive_s1(&DMatrix::zeros(1, 1), &nodes(&[1.0])).unwrap();
        assert_eq!(s1[(0, 0)], 1.0);
    }

    #[test]
    fn derive_s1_rejects_diagonal_s2() {
        let s2 = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]);
        assert!(matches!(
            derive_s1(&s2, &nodes(&[0.0, 1.0])),
            Err(Error::Constraint(_))
        ));
    }

    #[test]
    fn single_stage_is_theta_method() {
        // k = 1 condition: 2 = 1 + Q + gamma.
        for gamma in [1.0, 0.5, 0.25] {
            let coeffs = construct_order_s(
                &ConstructionInputs::new(nodes(&[1.0])).with_gamma(gamma),
            )
            .unwrap();
            assert_abs_diff_eq!(coeffs.q()[(0, 0)], 1.0 - gamma, epsilon = 1e-15);
        }
    }

    #[test]
    fn construction_rejects_bad_transfer() {
        let inputs = ConstructionInputs::new(nodes(&[0.5, 1.0]))
            .with_transfer(DMatrix::from_row_slice(2, 2, &[0.0, 0.9, 0.0, 0.9]));
        assert!(matches!(construct_order_s(&inputs), Err(Error::Constraint(_))));
    }

    #[test]
    fn construction_rejects_nodes_outside_unit_interval() {
        let inputs = ConstructionInputs::new(NodeVector::new(vec![-0.5, 1.0]).unwrap());
        assert!(matches!(construct_order_s(&inputs), Err(Error::InvalidNodes(_))));
    }

    #[test]
    fn construction_rejects_non_zero_stable_transfer() {
        // Pe = e but eigenvalues 1 and -2.
        let p = DMatrix::from_row_slice(2, 2, &[-0.5, 1.5, 1.5, -0.5]);
        let inputs = ConstructionInputs::new(nodes(&[0.5, 1.0])).with_transfer(p);
        assert!(matches!(construct_order_s(&inputs), Err(Error::Constraint(_))));
    }

    #[test]
    fn node_vector_invariants() {
        assert!(NodeVector::new(vec![0.5, 0.5, 1.0]).is_err());
        assert!(NodeVector::new(vec![0.0, 0.9]).is_err());
        assert!(NodeVector::new(vec![]).is_err());
        assert!(NodeVector::new(vec![-0.3, 1.0]).is_ok());
    }
}
