//! Simulation and verification toolkit for balanced excitatory/inhibitory
//! stochastic networks.
//!
//! The crate has two sides that meet in [`analysis`]:
//!
//! * the **particle side** ([`particle`]) integrates the `2n`-dimensional SDE
//!   system whose interaction is scaled by `n^{-1/2}` and factorises through a
//!   finite-rank spatial kernel;
//! * the **limit side** ([`balance`], [`limit`]) solves the deterministic
//!   kinetic-limit equations under the Gaussian moment closure: covariances
//!   relax in closed form while the basis coefficients of the means are held
//!   on the balanced manifold `G(v, K) = 0`.
//!
//! [`model`] holds the domain types shared by both sides, [`quadrature`] the
//! Gaussian expectations everything on the limit side is built from, and
//! [`config`] / [`scenario`] the scenario runner behind the `balnet` binary.

pub mod analysis;
pub mod balance;
pub mod config;
mod error;
pub mod limit;
pub mod model;
pub mod particle;
pub mod presets;
pub mod quadrature;
mod reduce;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
pub use model::{
    BasisFunction, ConnectivityKernel, Domain, Drift, GainSpec, GainTable, IntrinsicDynamics,
    NetworkModel, Noise, Population, ProjectionWorkspace, SpatialBasis,
};
