//! Simulation and steady-state analysis of heterogeneous port-Hamiltonian
//! networks.
//!
//! Nodes carry port-Hamiltonian dynamics (differential or algebraic), edges
//! carry integrator dynamics, and constant disturbances may enter nodes that
//! have no actuation. The crate provides:
//!
//! * [`graph`]: incidence/Laplacian algebra and node classes,
//! * [`energy`]: convex energy functions with Bregman distances,
//! * [`network`]: assembly of the closed network and elimination of
//!   algebraic nodes,
//! * [`steadystate`]: agreement outputs, optimal input allocation and
//!   feasibility solves,
//! * [`control`]: decentralized integral and distributed optimal controllers,
//! * [`sim`]: adaptive/fixed-step integration with Lyapunov monitors,
//! * [`microgrid`]: a generator/inverter/load frequency-control front-end,
//! * [`scenario`]: JSON scenario files and the command implementations
//!   behind the `phnet` binary.

pub mod error;
pub mod energy;
pub mod graph;
pub mod network;
pub mod steadystate;
pub mod control;
pub mod sim;
pub mod microgrid;
pub mod scenario;

pub use error::{Error, Result};
