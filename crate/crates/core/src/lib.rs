//! Quantum trajectories of a continuously monitored qubit and the quantum
//! speed limit statistics built from them.
//!
//! The qubit evolves under H = (ω/2)σ_y while σ_z is measured continuously
//! with strength κ. Single trajectories follow the Itô stochastic master
//! equation dρ = L[ρ]dt + I[ρ]dW; their average obeys the Lindblad equation
//! dρ = L[ρ]dt, which is solved in closed form in [`kernels`].

pub mod ensemble;
pub mod error;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod numerics;
pub mod params;
pub mod sde;
pub mod state;
pub mod validate;

pub use error::{Error, Result};
pub use params::SimParams;
pub use state::{BlochVector, DensityMatrix};
