//! Causal representation learning workbench: simulators, exact discrete
//! oracles, a small hand-differentiated encoder/predictor, robust training
//! and bound calculators.

pub mod attack;
pub mod audit;
pub mod bounds;
pub mod data;
pub mod error;
pub mod info;
pub mod model;
pub mod numkit;
pub mod objective;
pub mod scm;
pub mod trainer;

pub use error::{Error, Result};
