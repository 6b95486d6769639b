//! Two-step IMEX Peer methods for split systems `u' = F0(u) + F1(u)`, with checks for
//! preservation of steady states and of the stiff relaxation limit.
//!
//! - [`coefficients`]: construction, validation, storage and stability of coefficient sets.
//! - [`stepper`]: the staged time step, Newton stage solver and starting procedure.
//! - [`relaxation`]: relaxation structure `(C, G, E)` and the limit system.
//! - [`problems`]: the test problems.
//! - [`harness`]: error norms, reference solutions, convergence, well-balancing and
//!   asymptotic-preserving experiments, CSV output.

pub mod coefficients;
pub mod error;
pub mod harness;
pub mod problems;
pub mod relaxation;
pub mod stepper;

pub use coefficients::{builtin, construct_order_s, validate, ConstructionInputs, NodeVector, PeerCoefficients};
pub use error::{Error, Result};
pub use stepper::{integrate, step, SolverConfig, SplitProblem, StageBlock, Trajectory};
