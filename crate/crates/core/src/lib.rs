//! Classical phase-space ensembles, their projection onto configuration
//! space, and Schrödinger/Madelung dynamics on periodic spectral grids.
//!
//! The tiers share one grid and Hamiltonian model:
//!
//! - [`phase_ensemble`]: Liouville transport and characteristics on phase space.
//! - [`projection`]: the quasi-quantal projection (Hamilton-Jacobi plus
//!   continuity), valid up to the first caustic.
//! - [`quantum`]: split-step Schrödinger evolution, the classical-wave
//!   variant and the Madelung decomposition.
//!
//! [`scenario`] ties them together behind JSON scenario files.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod acceptance;
pub mod characteristics;
pub mod clebsch;
pub mod error;
pub mod fisher;
pub mod grid;
pub mod hamiltonian;
pub mod interp;
pub mod invariants;
pub mod phase_ensemble;
pub mod profiles;
pub mod projection;
pub mod quantum;
pub mod scenario;

pub use error::{Error, Result};
pub use grid::{Grid, NumericsConfig, PhaseGrid, Vec2};
pub use hamiltonian::{Hamiltonian, Potential};
pub use phase_ensemble::PhaseDensity;
pub use projection::{ConfigDensity, MomentumField};
pub use quantum::WaveFunction;
pub use scenario::{RunReport, Scenario, Tier};
