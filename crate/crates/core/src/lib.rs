//! Linear-quadratic control of a linear SDE shared by two controllers:
//! one restricted to deterministic time functions, one allowed to react
//! to the driving noise.
//!
//! The crate solves the two decoupled Riccati equations that parametrize
//! the optimal value, assembles the feedback gains `M1, M2, M3` and the
//! mean-field closed loop, simulates it by Euler-Maruyama with
//! reproducible per-path random streams, and machine-checks the
//! optimality conditions (adjoint reconstruction, residuals, value
//! identity) together with the singular-case and infinite-horizon
//! extensions.
//!
//! Entry points:
//!
//! - [`model::ProblemSpec`] — problem data, JSON loading, validation.
//! - [`riccati`] — `solve_p1`, `solve_p2`, `solve_classic`,
//!   `solve_algebraic`.
//! - [`synthesis`] — feedback gains and the closed-loop matrices.
//! - [`simulate`] — mean ODE, Monte Carlo paths, cost estimation.
//! - [`verify`] — adjoint residuals, value identity, matrix property
//!   suite.

pub mod builder;
pub mod error;
pub mod grid;
mod linalg;
pub mod model;
pub mod riccati;
pub mod simulate;
pub mod synthesis;
pub mod verify;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use model::{CoefficientFrame, CoefficientSchedule, Dims, ProblemSpec, RegularityClass, RegularityTag};
pub use riccati::{AREResult, RiccatiSolution, StructureMaps};
pub use simulate::{AffinePolicy, CostEstimate, TrajectoryBundle};
pub use synthesis::{ClosedLoopSystem, GainSchedule};
pub use verify::{ResidualReport, SuiteReport, ValueCheck, VerifyReport};
