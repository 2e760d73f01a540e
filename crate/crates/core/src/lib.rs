//! Numerical laboratory for sequential heteroclinic dynamics in the
//! generalized Lotka–Volterra system
//!
//! ```text
//! x_i' = x_i (sigma_i - sum_j rho_ij x_j),   i = 1..n,
//! ```
//!
//! whose first `p` axis equilibria `O_k = sigma_k e_k` are chained into a
//! heteroclinic cycle. The crate certifies parameter regimes, integrates
//! trajectories with section events, reconstructs the heteroclinic surface
//! spanned by the two-dimensional unstable manifolds, classifies its
//! topology and measures its stability.

pub mod cli;
pub mod conditions;
pub mod error;
pub mod geometry3d;
pub mod integrator;
pub mod io;
pub mod manifold;
pub mod model;
pub mod stability;

pub use error::{Error, Result};
