//! Monte Carlo engine for horizontal diffusions on model Riemannian
//! manifolds, and for checking curvature bounds through gradient estimates
//! and functional inequalities on path space.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod functionals;
pub mod geometry;
pub mod linalg;
pub mod parallel;
pub mod rng;
pub mod stats;
pub mod transport;

pub use error::{Error, Result};
