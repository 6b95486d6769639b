//! Relaxation structure of stiffly scaled balance laws `U' = F0(U) + G(U) / eps`.
//!
//! The source `G` is annihilated by a conservation matrix `C` (`C G(U) = 0` for all `U`),
//! and each conserved state `u = C U` has a unique local equilibrium `E(u)` with
//! `G(E(u)) = 0` and `C E(u) = u`. As `eps -> 0` the conserved part obeys the limit system
//! `u' = C F0(E(u))`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::stepper::{SplitProblem, StateFn, Trajectory};

/// Default number of sampled states for the "for all U" checks.
pub const DEFAULT_SAMPLES: usize = 128;
/// Seed of the sampling generator.
pub const DEFAULT_SEED: u64 = 0x5eed_1234;
/// Sampled states lie in `[-SAMPLE_BOX, SAMPLE_BOX]^N`.
pub const SAMPLE_BOX: f64 = 2.0;
/// Singular values of `C` at or below this count as rank deficiency.
pub const RANK_TOL: f64 = 1e-10;
/// Agreement required between `F1` and `G / eps`.
pub const SCALING_TOL: f64 = 1e-13;

#[derive(Clone)]
pub struct RelaxationStructure {
    pub n_full: usize,
    pub m_cons: usize,
    pub c: DMatrix<f64>,
    pub source: StateFn,
    pub equilibrium_map: StateFn,
}

impl fmt::Debug for RelaxationStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RelaxationStructure")
            .field("n_full", &self.n_full)
            .field("m_cons", &self.m_cons)
            .field("c", &self.c)
            .finish_non_exhaustive()
    }
}

impl RelaxationStructure {
    /// Requires `C` of shape `M x N` with `M < N` and full row rank.
    pub fn new(
        c: DMatrix<f64>,
        source: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        equilibrium_map: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        let (m, n) = c.shape();
        if m == 0 || m >= n {
            return Err(Error::Dimension(format!(
                "conservation matrix must be M x N with 0 < M < N, got {m} x {n}"
            )));
        }
        let rank = c
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .filter(|&&sv| sv > RANK_TOL)
            .count();
        if rank != m {
            return Err(Error::InvalidArgument(format!(
                "conservation matrix has rank {rank}, expected {m}"
            )));
        }
        Ok(RelaxationStructure {
            n_full: n,
            m_cons: m,
            c,
            source: Arc::new(source),
            equilibrium_map: Arc::new(equilibrium_map),
        })
    }

    pub fn project(&self, state: &DVector<f64>) -> DVector<f64> {
        &self.c * state
    }

    pub fn project_trajectory(&self, trajectory: &Trajectory) -> Trajectory {
        Trajectory {
            times: trajectory.times.clone(),
            states: trajectory.states.iter().map(|u| self.project(u)).collect(),
        }
    }

    /// Applies `C` to each of the stacked `N`-blocks of `stacked`.
    pub fn project_blockwise(&self, stacked: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n_full;
        if !stacked.len().is_multiple_of(n) {
            return Err(Error::Dimension(format!(
                "stacked vector of length {} is not a multiple of {n}",
                stacked.len()
            )));
        }
        let blocks = stacked.len() / n;
        let mut out = DVector::zeros(blocks * self.m_cons);
        for k in 0..blocks {
            let part = &self.c * stacked.rows(k * n, n);
            out.rows_mut(k * self.m_cons, self.m_cons).copy_from(&part);
        }
        Ok(out)
    }

    /// Reproducible pseudo-random full and conserved states in the sampling box.
    pub fn samples(&self, count: usize, seed: u64) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |len: usize| {
            DVector::from_fn(len, |_, _| rng.gen_range(-SAMPLE_BOX..=SAMPLE_BOX))
        };
        let full = (0..count).map(|_| draw(self.n_full)).collect();
        let cons = (0..count).map(|_| draw(self.m_cons)).collect();
        (full, cons)
    }
}

/// Largest defects of the three structural identities over the samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureReport {
    /// `max |C G(U)|`
    pub conservation: f64,
    /// `max |G(E(u))|`
    pub equilibrium: f64,
    /// `max |C E(u) - u|`
    pub consistency: f64,
}

impl StructureReport {
    pub fn max_defect(&self) -> f64 {
        self.conservation.max(self.equilibrium).max(self.consistency)
    }
}

pub fn check_structure(
    structure: &RelaxationStructure,
    sample_states: &[DVector<f64>],
    sample_conserved: &[DVector<f64>],
) -> Result<StructureReport> {
    if sample_states.is_empty() || sample_conserved.is_empty() {
        return Err(Error::InvalidArgument("structure check needs samples".into()));
    }
    let mut report = StructureReport {
        conservation: 0.0,
        equilibrium: 0.0,
        consistency: 0.0,
    };
    for state in sample_states {
        if state.len() != structure.n_full {
            return Err(Error::Dimension(format!(
                "sample state has length {}, expected {}",
                state.len(),
                structure.n_full
            )));
        }
        let g = (structure.source)(state);
        report.conservation = report.conservation.max((&structure.c * g).amax());
    }
    for u in sample_conserved {
        if u.len() != structure.m_cons {
            return Err(Error::Dimension(format!(
                "sample conserved state has length {}, expected {}",
                u.len(),
                structure.m_cons
            )));
        }
        let e = (structure.equilibrium_map)(u);
        if e.len() != structure.n_full {
            return Err(Error::Dimension(format!(
                "equilibrium map returned length {}, expected {}",
                e.len(),
                structure.n_full
            )));
        }
        report.equilibrium = report.equilibrium.max((structure.source)(&e).amax());
        report.consistency = report.consistency.max((&structure.c * &e - u).amax());
    }
    Ok(report)
}

/// A split problem whose stiff part is `G / eps`.
#[derive(Debug, Clone)]
pub struct RelaxationProblem {
    pub full: SplitProblem,
    pub structure: RelaxationStructure,
    pub epsilon: f64,
}

impl RelaxationProblem {
    /// Checks dimensions and `F1 = G / eps` on the default samples.
    pub fn new(full: SplitProblem, structure: RelaxationStructure, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if full.dim != structure.n_full {
            return Err(Error::Dimension(format!(
                "problem dimension {} differs from structure dimension {}",
                full.dim, structure.n_full
            )));
        }
        let (states, _) = structure.samples(DEFAULT_SAMPLES, DEFAULT_SEED);
        for u in &states {
            let scaled = (structure.source)(u) / epsilon;
            let defect = ((full.f1)(u) - &scaled).amax();
            if !(defect <= SCALING_TOL * (1.0 + scaled.amax())) {
                return Err(Error::InvalidArgument(format!(
                    "F1 differs from G / eps by {defect:e}"
                )));
            }
        }
        Ok(RelaxationProblem {
            full,
            structure,
            epsilon,
        })
    }

    /// Structure check on the default reproducible samples.
    pub fn check(&self) -> Result<StructureReport> {
        let (states, cons) = self.structure.samples(DEFAULT_SAMPLES, DEFAULT_SEED);
        check_structure(&self.structure, &states, &cons)
    }
}

/// The `M`-dimensional equilibrium system `u' = C F0(E(u))`, with an identically zero
/// implicit part so that any IMEX method applied to it runs explicitly.
pub fn limit_problem(rp: &RelaxationProblem) -> SplitProblem {
    let m = rp.structure.m_cons;
    let c = rp.structure.c.clone();
    let f0_full = rp.full.f0.clone();
    let e_map = rp.structure.equilibrium_map.clone();
    let mut limit = SplitProblem::new(
        format!("{}-limit", rp.full.label),
        m,
        move |u| &c * f0_full(&e_map(u)),
        |u| DVector::zeros(u.len()),
    )
    .with_jacobian(|u| DMatrix::zeros(u.len(), u.len()));
    if let Some(u0) = &rp.full.initial {
        limit = limit.with_initial(rp.structure.project(u0));
    }
    limit
}

/// `max_n |G(U_n)|` over the recorded states.
pub fn equilibrium_residual(rp: &RelaxationProblem, trajectory: &Trajectory) -> Result<f64> {
    trajectory.states.iter().try_fold(0.0f64, |acc, u| {
        rp.full.check_dim(u, "trajectory state")?;
        Ok(acc.max((rp.structure.source)(u).amax()))
    })
}

/// Initial data on the equilibrium manifold: exactly `E(u)`.
pub fn well_prepared_data(rp: &RelaxationProblem, u_conserved: &DVector<f64>) -> Result<DVector<f64>> {
    if u_conserved.len() != rp.structure.m_cons {
        return Err(Error::Dimension(format!(
            "conserved state has length {}, expected {}",
            u_conserved.len(),
            rp.structure.m_cons
        )));
    }
    Ok((rp.structure.equilibrium_map)(u_conserved))
}
