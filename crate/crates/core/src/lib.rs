//! Simulation and verification toolkit for the (2+1)-dimensional
//! solid-on-solid surface model above a hard wall.
//!
//! * [`model`]: state space, Hamiltonian, external field, conditionals.
//! * [`dynamics`]: heat-bath chain, grand monotone coupling, censoring.
//! * [`contours`]: level lines on the dual lattice and the weight-shifting maps.
//! * [`observables`]: level statistics, diagonal-line deviations.
//! * [`exact`]: enumerated chains, exact mixing and relaxation times.
//! * [`bounds`]: canonical paths and congestion bounds.
//! * [`harness`]: experiment presets, configuration and checkpoints.

pub mod bounds;
pub mod contours;
pub mod dynamics;
pub mod error;
pub mod exact;
pub mod harness;
pub mod io;
pub mod model;
pub mod observables;
pub mod rng;

pub use error::{Result, SosError};
pub use model::{
    equilibrium_height, BoundaryCondition, EquilibriumHeight, FloorMode, HeightDistribution, HeightField, Lattice,
    ModelParams, SosSystem,
};
