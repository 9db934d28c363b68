//! Linear-quadratic Gaussian graphon mean field games.
//!
//! The crate is organised bottom-up:
//!
//! - [`graphon`]: graphon representations, spectra, norms, random graph
//!   sampling and spectral fitting.
//! - [`ode`]: fixed-grid RK4 integration, matrix Riccati solvers and
//!   cubic Hermite interpolation of sampled paths.
//! - [`solver`]: the equilibrium forward-backward equations, solved on finite
//!   networks and on spectral truncations of graphons, by fixed-point
//!   iteration or Riccati decoupling.
//! - [`sim`]: closed-loop Monte Carlo simulation of agent populations on
//!   finite graphs and the error metrics against the graphon mean field.
//! - [`io`]: CSV/JSON layouts for paths, solutions and sampled graphs.

pub mod error;
pub mod graphon;
pub mod io;
pub mod ode;
pub mod rng;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
