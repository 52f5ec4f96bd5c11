//! Guaranteed (worst-case) control of ODE systems under functionally
//! constrained disturbances.
//!
//! The crate is organised bottom-up:
//!
//! - [`system`], [`partition`], [`signal`], [`trajectory`], [`integrate`]:
//!   the controlled system, time grids, piecewise-constant signals and the
//!   fixed-step RK4 solver that produces motions.
//! - [`inversion`]: divided differences, surrogate-disturbance
//!   identification, quotient classes of the disturbance set and sampled
//!   checkers for the structural conditions the strategies rely on.
//! - [`strategies`]: full-memory feedbacks (test-action strategy, its
//!   finite-test variant, the single-test strategy) and the closed-loop
//!   driver.
//! - [`oracle`]: target-direction oracles, including a grid dynamic
//!   programming approximation of the lower (max-min) game value.
//! - [`evaluation`]: disturbance ensembles, guaranteed-result estimates,
//!   the ordering check between the four guaranteed results and
//!   convergence studies.
//! - [`bilinear`]: the 2x2 bilinear reference system with a known value.

pub mod bilinear;
pub mod error;
pub mod evaluation;
pub mod export;
pub mod integrate;
pub mod inversion;
pub mod oracle;
pub mod partition;
pub mod signal;
pub mod strategies;
pub mod system;
pub mod trajectory;
pub(crate) mod vecmath;

pub use error::{Error, Result};
pub use integrate::{integrate, integrate_span};
pub use partition::{Partition, TestSchedule};
pub use signal::Signal;
pub use system::{BoundingBox, CompactSet, Dynamics, RightHandSide};
pub use trajectory::{sup_distance, Trajectory};
