pub mod error;
pub mod config;
pub mod criteria;
pub mod experiments;
pub mod generator;
pub mod model;
pub mod quadrature;
pub mod sde_engine;
pub mod special;
pub mod stable_measure;
pub mod test_functions;

pub use error::{Error, Result};
