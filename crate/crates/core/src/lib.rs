//! INS/DVL navigation with a learned DVL outage predictor.

mod error;

pub mod dvl_model;
pub mod ekf;
pub mod eval_runner;
pub mod frames;
pub mod set_transformer;
pub mod sim_data;
pub mod strapdown;

pub use error::{NavError, Result};
