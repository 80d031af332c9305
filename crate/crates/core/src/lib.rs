//! Simulation and verification tools for Bernoulli bond percolation and
//! Gaussian level-set percolation: exploration algorithms with revealment
//! accounting, exact enumeration oracles, and Monte Carlo checks of the
//! associated inequalities.

pub mod bond;
pub mod error;
pub mod estimators;
pub mod events;
pub mod explorer;
pub mod gaussian;
pub mod lattice;
pub mod mc;
pub mod oracle;
pub mod rng;

pub use bond::{BondConfig, DualView, EdgeStates, LazyBonds};
pub use error::{Error, Result};
pub use lattice::LatticeBox;
pub use rng::ReplicaStream;
