//! Robustness analysis and optimal edge-weight allocation for linear
//! diffusion networks.
//!
//! The model is a network of integrators coupled through a weighted graph
//! Laplacian, driven by external in/outflow pairs ("ports"):
//!
//! ```text
//! dx/dt = -L_w x + E d,      y = E^T x
//! ```
//!
//! where `L_w` is the Laplacian of a nonnegatively weighted graph and each
//! column of `E` routes one unit of inflow to one node and one unit of
//! outflow from another. The induced L2 gain (H-infinity norm) from `d` to
//! `y` is attained at zero frequency for this symmetric system class, which
//! reduces the whole analysis to spectral computations on `E^T L_w^+ E`.
//!
//! The crate is organized around that reduction:
//!
//! - [`graph`] — weighted/signed graphs, ports, incidence and Laplacian
//!   assembly, effective resistance, connectivity.
//! - [`spectral`] — dense symmetric matrices, eigendecomposition,
//!   pseudo-inverse, and the shared PSD test convention.
//! - [`analysis`] — the gain itself plus the feasibility certificates that
//!   bound it (block LMI, Schur form, Riccati residual, signed-Laplacian
//!   test, effective-resistance identity, algebraic-connectivity bound).
//! - [`allocator`] — minimizing the gain over edge weights on a budget
//!   simplex, a grid-search oracle, and connectivity maximization.
//! - [`simulator`] — fixed-step time-domain integration with running L2
//!   accounting to verify certified gains against actual trajectories.

pub mod allocator;
pub mod analysis;
pub mod graph;
pub mod simulator;
pub mod spectral;

pub use allocator::{AllocationProblem, AllocationResult, OptimizeOptions};
pub use analysis::{BoundReport, ConnectivityBound, Gain, HinfCertificate};
pub use graph::{NetworkFile, PortSet, SignedGraph, WeightedGraph};
pub use simulator::{PiecewiseConstantSignal, SimulationTrace};
pub use spectral::{Spectrum, SymMatrix};
