pub mod data;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod population;
pub mod rng;
pub mod schemes;
pub mod sim;
pub mod testutil;
pub mod variance;

pub use error::{Error, Result};
