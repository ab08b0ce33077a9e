//! Solvers and learning algorithms for continuous-time linear-quadratic graphon mean
//! field games: exact equilibria, policy-gradient iterations and convergence constants.

pub mod cost;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod gradients;
pub mod graphon;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod path;
pub mod policy;
pub mod rng;
pub mod solver;
pub mod theory;
pub mod zeroth_order;

pub use error::{Error, Result};
