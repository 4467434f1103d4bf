//! Joint knowledge sharing, semantic extraction ratio and base-station
//! association for multi-cell hybrid semantic/bit networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`scenario`]: domain types, link gains and seeded scenario generation.
//! - [`accuracy`]: the four-parameter accuracy curve, its monotone envelope,
//!   inversion and least-squares fitting.
//! - [`ratetime`]: Shannon rate, timing components and the generalized
//!   effective semantic rate.
//! - [`monoopt`]: polyblock outer approximation, boundary projection and the
//!   single-variable reduced problem.
//! - [`kuer`]: per device/station pair solvers (exhaustive, two-tier, no sharing).
//! - [`assoc`]: capacity-constrained maximum-weight association.
//! - [`harness`]: parameter sweeps and CSV output.
//! - [`cli`]: the `semnet` command line.

pub mod accuracy;
pub mod assoc;
pub mod cli;
pub mod harness;
pub mod kuer;
pub mod monoopt;
pub mod ratetime;
pub mod scenario;

pub use accuracy::AccuracyModel;
pub use assoc::{AssociationInstance, Assignment};
pub use kuer::{PairContext, PairSolution, SolverTag};
pub use ratetime::{Partition, TimeBreakdown};
pub use scenario::{Scenario, ScenarioConfig};
