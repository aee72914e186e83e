//! Goal-based wealth management as an entropy-regularized linear-quadratic
//! control problem (G-learning), with maximum-likelihood inverse reinforcement
//! learning of the reward parameters from observed trajectories.

pub mod adam;
pub mod cli;
pub mod config;
pub mod error;
pub mod girl;
pub mod glearner;
pub mod io;
pub mod linalg;
pub mod market;
pub mod metrics;
pub mod rewards;

pub use error::{Error, Result};
