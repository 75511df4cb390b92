pub mod analysis;
pub mod design_map;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod kernels;
pub mod matrix;
pub mod solver;

pub use error::{Error, Result};
