pub mod error;
pub mod estimator;
pub mod lie;
pub mod model;
pub mod observability;
pub mod simulator;
pub mod structures;
pub mod symbolic;
pub mod symmetry;

pub use error::{Error, Result};
