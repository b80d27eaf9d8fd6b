//! Numerical toolkit for monotone variational recurrence relations on `Z^d`:
//! periodic actions, their gradient flows, minimizers, ghost circles and
//! Aubry-Mather sets, with the Frenkel-Kontorova model and the standard map
//! as the worked instances.

pub mod error;
pub mod lattice;
pub mod linalg;
pub mod minimizers;
pub mod ode;
pub mod flow;
pub mod aubry_mather;
pub mod ghost;
pub mod io;
pub mod potentials;
pub mod twist;

pub use error::{Error, Result};
pub use lattice::{Configuration, PeriodLattice};
pub use potentials::{FkSpec, LocalPotential, PeriodicAction, TrigSeries};

/// Library version embedded in artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
