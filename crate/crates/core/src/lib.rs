pub mod data_io;
pub mod error;
pub mod estimator;
pub mod forecaster;
pub mod likelihood;
pub mod live;
pub mod model;
pub mod quadrature;
pub mod simulator;
pub mod synthetic;

pub use error::{Error, Result};
