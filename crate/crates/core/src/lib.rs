//! Coordination of virtual inertia plants with a physics-informed
//! actor-critic, a plain actor-critic and a genetic-algorithm baseline.

pub mod agent;
pub mod env;
pub mod error;
pub mod experiment;
pub mod ga;
pub mod grid;
pub mod nn;
pub mod objective;
pub mod record;

pub use error::{Error, Result};
