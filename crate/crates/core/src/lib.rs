pub mod acceptance;
pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod pcaep;
pub mod preprocessing;
pub mod quadrature;
pub mod rng;
pub mod sensing;
pub mod signal;
pub mod spectral;
pub mod spectrum;
pub mod sweep;
pub mod vector;

pub use error::{Error, Result};
