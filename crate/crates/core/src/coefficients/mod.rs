//! Coefficient sets of two-step IMEX Peer methods.
//!
//! A method with `s` stages advances the stacked stage vector `w_n` by
//!
//! ```text
//! w_{n+1} = P w_n + dt Qhat F0(w_n) + dt Rhat F0(w_{n+1}) + dt Q F1(w_n) + dt R F1(w_{n+1})
//! ```
//!
//! with `Qhat = Q + R S1` and `Rhat = R S2`. `R` is lower triangular with constant
//! diagonal `gamma`, `S2` is strictly lower triangular and the extrapolation matrix
//! `S1` is always derived from `S2` and the nodes, never stored.

mod builtin;
mod construct;
mod io;
mod stability;
mod validate;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use builtin::{builtin, builtin_inputs, BuiltinInputs, MAX_BUILTIN_STAGES};
pub use construct::{
    construct_order_s, default_gamma, default_transfer, derive_s1, extrapolation_operator,
    vandermonde, ConstructionInputs,
};
pub(crate) use io::fmt_decimal;
pub use io::{format_coefficients, load_coefficients, parse_coefficients, save_coefficients};
pub use stability::{stability_scan, Amplification, ComplexGrid, StabilityField};
pub use validate::{
    check_zero_stability, residual_polynomial_exactness, validate, ExactnessMode,
    ValidationReport, Violation, EXACTNESS_PROBE_CUTOFF, IMEX_SPLIT_ALPHA, VALIDATION_TOL,
};

/// Stage nodes `c_1, ..., c_s` as fractions of the step size.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeVector(Vec<f64>);

impl NodeVector {
    /// Pairwise distinct, finite, and `c_s = 1`.
    pub fn new(c: Vec<f64>) -> Result<Self> {
        let nodes = NodeVector(c);
        nodes.check()?;
        Ok(nodes)
    }

    /// Wraps raw node values without checking; [`validate`] reports the defects.
    pub fn from_raw(c: Vec<f64>) -> Self {
        NodeVector(c)
    }

    fn check(&self) -> Result<()> {
        let c = &self.0;
        if c.is_empty() {
            return Err(Error::InvalidNodes("at least one node is required".into()));
        }
        if let Some(v) = c.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidNodes(format!("non-finite node {v}")));
        }
        if let Some((i, j)) = self.duplicate_pair() {
            return Err(Error::InvalidNodes(format!(
                "nodes {} and {} coincide (c = {})",
                i + 1,
                j + 1,
                c[i]
            )));
        }
        let last = c[c.len() - 1];
        if last != 1.0 {
            return Err(Error::InvalidNodes(format!(
                "last node must satisfy c_s = 1, got {last}"
            )));
        }
        Ok(())
    }

    pub(crate) fn duplicate_pair(&self) -> Option<(usize, usize)> {
        let c = &self.0;
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                if c[i] == c[j] {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Constructed methods keep every stage time inside `[t_n, t_n + dt]`.
    pub fn check_unit_interval(&self) -> Result<()> {
        match self.0.iter().find(|&&v| !(0.0..=1.0).contains(&v)) {
            Some(v) => Err(Error::InvalidNodes(format!(
                "node {v} outside [0, 1] is not supported here"
            ))),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for NodeVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A complete IMEX-Peer coefficient set. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PeerCoefficients {
    gamma: f64,
    c: NodeVector,
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    s1: DMatrix<f64>,
    s2: DMatrix<f64>,
    qhat: DMatrix<f64>,
    rhat: DMatrix<f64>,
    predictor: DMatrix<f64>,
}

impl PeerCoefficients {
    /// Assembles a coefficient set from its stored matrices and derives `S1`, `Qhat`, `Rhat`.
    ///
    /// Only shapes and node distinctness are enforced here; everything else is the job
    /// of [`validate`].
    pub fn from_parts(
        c: NodeVector,
        gamma: f64,
        p: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        s2: DMatrix<f64>,
    ) -> Result<Self> {
        let s = c.len();
        if s == 0 {
            return Err(Error::InvalidNodes("at least one node is required".into()));
        }
        for (name, m) in [("P", &p), ("Q", &q), ("R", &r), ("S2", &s2)] {
            if m.shape() != (s, s) {
                return Err(Error::Dimension(format!(
                    "{name} is {}x{}, expected {s}x{s}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        if let Some((i, j)) = c.duplicate_pair() {
            return Err(Error::InvalidNodes(format!(
                "nodes {} and {} coincide",
                i + 1,
                j + 1
            )));
        }
        let predictor = extrapolation_operator(&c)?;
        let s1 = (DMatrix::identity(s, s) - &s2) * &predictor;
        let qhat = &q + &r * &s1;
        let rhat = &r * &s2;
        Ok(PeerCoefficients {
            gamma,
            c,
            p,
            q,
            r,
            s1,
            s2,
            qhat,
            rhat,
            predictor,
        })
    }

    pub fn stages(&self) -> usize {
        self.c.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn nodes(&self) -> &NodeVector {
        &self.c
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn s1(&self) -> &DMatrix<f64> {
        &self.s1
    }

    pub fn s2(&self) -> &DMatrix<f64> {
        &self.s2
    }

    pub fn qhat(&self) -> &DMatrix<f64> {
        &self.qhat
    }

    pub fn rhat(&self) -> &DMatrix<f64> {
        &self.rhat
    }

    /// `V0 V1^{-1}`: maps old stage values to the polynomial extrapolation at new stage times.
    pub fn predictor(&self) -> &DMatrix<f64> {
        &self.predictor
    }

    pub fn label(&self) -> String {
        format!("peer-s{}", self.stages())
    }
}
